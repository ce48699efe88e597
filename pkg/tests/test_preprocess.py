import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcdict.exceptions import DataError, UsageError
from pvcdict.preprocess import (Annotation, RawRecord, median_filter, odd_window, preprocess_record,
                                read_annotations, read_record, remove_baseline, segment_beats,
                                write_annotations, write_record)
from pvcdict.sparse_core import Label


def reference_median(x, window):
    """Direct sliding median with edge replication."""
    h = window // 2
    padded = np.concatenate([np.full(h, x[0]), x, np.full(h, x[-1])])
    return np.array([np.median(padded[i:i + window]) for i in range(x.size)])


def test_median_constant_unchanged():
    x = np.full(20, 3.5)
    assert np.array_equal(median_filter(x, 5), x)


def test_median_removes_single_spike():
    assert median_filter(np.array([0, 0, 9, 0, 0.0]), 3).tolist() == [0, 0, 0, 0, 0]


def test_median_removes_sparse_impulses():
    x = np.zeros(200)
    x[5::10] = 7.0  # one impulse per 10 samples, window 9 -> at most one per window
    assert np.all(median_filter(x, 9) == 0)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=60), st.integers(1, 15))
@settings(max_examples=60, deadline=None)
def test_median_matches_reference(values, window):
    x = np.array(values)
    w = window if window % 2 else window + 1
    if w > x.size:
        return
    assert np.allclose(median_filter(x, window), reference_median(x, w))


def test_median_errors():
    with pytest.raises(UsageError):
        median_filter(np.array([]), 3)
    with pytest.raises(UsageError):
        median_filter(np.ones(3), 7)


def test_window_sizes_at_360hz():
    assert odd_window(0.2, 360) == 73
    assert odd_window(0.6, 360) == 217


def test_baseline_zero_signal():
    assert np.array_equal(remove_baseline(RawRecord(np.zeros(1000))), np.zeros(1000))


def test_baseline_slow_ramp_removed():
    x = np.linspace(0, 2.0, 5000)
    out = remove_baseline(RawRecord(x))
    assert np.max(np.abs(out[300:-300])) < 1e-9


def test_baseline_dc_offset_invariance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3000)
    a = remove_baseline(RawRecord(x))
    b = remove_baseline(RawRecord(x + 4.25))
    assert np.allclose(a, b, atol=1e-9)


def test_baseline_too_short():
    with pytest.raises(UsageError):
        remove_baseline(RawRecord(np.ones(100)))


def test_segment_boundary_exact():
    x = np.arange(1.0, 1001.0)
    seg = segment_beats(x, [Annotation(150, "N")], "r")
    assert len(seg.beats) == 1
    assert np.array_equal(seg.beats[0].samples, x[0:301])
    assert seg.beats[0].timestamp == 150


def test_segment_skips_edges():
    x = np.arange(1.0, 1001.0)
    seg = segment_beats(x, [Annotation(100, "N"), Annotation(900, "V")], "r")
    assert seg.beats == []
    assert seg.skipped_count == 2


def test_segment_overlapping_beats():
    x = np.arange(1.0, 1001.0)
    seg = segment_beats(x, [Annotation(300, "N"), Annotation(500, "V")], "r")
    a, b = seg.beats
    shared = np.intersect1d(a.samples, b.samples)
    assert shared.size == 101
    assert b.label is Label.PVC


def test_preprocess_validates_annotations():
    rec = RawRecord(np.random.default_rng(0).standard_normal(2000))
    with pytest.raises(DataError):
        preprocess_record(rec, [Annotation(500, "N"), Annotation(400, "N")])
    with pytest.raises(DataError):
        preprocess_record(rec, [Annotation(5000, "N")])


def test_record_io_roundtrip(tmp_path):
    rec = RawRecord(np.round(np.random.default_rng(1).standard_normal(50), 6), 250.0, 12, "x1")
    write_record(rec, tmp_path / "x1.csv")
    back = read_record(tmp_path / "x1.csv")
    assert back.fs == 250.0 and back.adc_bits == 12 and back.record_id == "x1"
    assert np.allclose(back.samples, rec.samples, atol=1e-6)
    anns = [Annotation(3, "N"), Annotation(9, "V"), Annotation(20, "O")]
    write_annotations(anns, tmp_path / "x1.ann.csv")
    assert read_annotations(tmp_path / "x1.ann.csv") == anns


def test_bad_files(tmp_path):
    (tmp_path / "bad.csv").write_text("# fs=360\nabc\n")
    with pytest.raises(DataError):
        read_record(tmp_path / "bad.csv")
    (tmp_path / "bad.ann.csv").write_text("sample_index,label\n12,Z\n")
    with pytest.raises(DataError):
        read_annotations(tmp_path / "bad.ann.csv")
