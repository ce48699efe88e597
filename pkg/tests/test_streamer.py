import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcdict.sparse_core import Label
from pvcdict.streamer import (Decision, Streamer, offline_flags, parse_label_script, run_stream,
                              worst_case_overhead)


def flags_for(script, th=0, n_th=None):
    labels = parse_label_script(script)
    return run_stream(list(range(len(labels))), labels, th, n_th, timestamps=list(range(len(labels))))


def brute_force_flags(labels):
    """Independent oracle: a beat is sent iff it or a neighbour is a PVC."""
    v = [Label.parse(l) is Label.PVC for l in labels]
    return [int(any(v[j] for j in (i - 1, i, i + 1) if 0 <= j < len(v))) for i in range(len(v))]


def test_table_case_all_normal():
    assert flags_for("NNNNNNN").flags == [0] * 7


def test_table_case_isolated_pvc():
    assert flags_for("NNVNN").flags == [0, 1, 1, 1, 0]


def test_table_case_pvc_run():
    assert flags_for("NNVVVVNN").flags == [0, 1, 1, 1, 1, 1, 1, 0]


def test_flags_at_record_edges():
    assert flags_for("VNNNV").flags == [1, 1, 0, 1, 1]


@given(st.lists(st.sampled_from("NVO"), max_size=60))
@settings(max_examples=200, deadline=None)
def test_streamer_matches_offline_oracle(labels):
    trace = run_stream(list(range(len(labels))), labels, th=10 ** 9)
    assert trace.flags == offline_flags(labels) == brute_force_flags(labels)


def test_two_beat_emission_delay():
    s = Streamer()
    labels = parse_label_script("NVNNVN")
    for n, lab in enumerate(labels):
        out = s.step(n, lab, n)
        assert [e.index for e in out] == ([n - 2] if n >= 2 else [])
    assert [e.index for e in s.flush()] == [4, 5]


def test_accumulator_counts_pvc_labels():
    s = Streamer(th=100)
    for n, lab in enumerate("NVVONV"):
        s.step(n, lab, n)
    assert s.acc == 3


def test_threshold_zero_fires_on_first_pvc():
    trace = flags_for("NNNVNN")
    assert trace.first_notification == 3
    assert [e.index for e in trace.transmitted] == [2, 3, 4]


def test_stop_at_beat_limit_all_normal():
    trace = flags_for("N" * 150, n_th=100)
    assert trace.stopped_at == 99  # the 100th beat
    assert len(trace.decisions) == 100
    assert trace.decisions[-1] is Decision.STOP_MONITORING
    assert trace.transmitted == []


def test_threshold_two_fires_after_third_pvc():
    labels = ["N"] * 40
    for i in (10, 20, 30):
        labels[i] = "V"
    trace = run_stream(list(range(40)), labels, th=2)
    assert trace.first_notification == 30
    assert all(d is Decision.CONTINUE for d in trace.decisions[:30])
    assert sorted(e.index for e in trace.transmitted) == [9, 10, 11, 19, 20, 21, 29, 30, 31]


def test_below_threshold_nothing_transmitted():
    trace = flags_for("NNVNNVNN", th=5)
    assert trace.transmitted == [] and trace.first_notification is None


@given(st.lists(st.sampled_from("NV"), min_size=1, max_size=60))
@settings(max_examples=100, deadline=None)
def test_transmitted_are_exactly_flagged_when_triggered(labels):
    trace = run_stream(list(range(len(labels))), labels, th=0)
    sent = sorted(e.index for e in trace.transmitted)
    assert sent == [i for i, f in enumerate(trace.flags) if f]
    assert all(e.flag == 1 for e in trace.transmitted)


@pytest.mark.parametrize("script,count", [("NNVNN", 3), ("NNVVVVNN", 6), ("NVNVN", 5), ("NNNN", 0)])
def test_worst_case_overhead(script, count):
    assert worst_case_overhead(parse_label_script(script)) == count


@given(st.integers(0, 10), st.integers(0, 2**32 - 1))
def test_overhead_run_formula(n_runs, seed):
    # runs separated by at least two normals do not share delimiters
    rng = np.random.default_rng(seed)
    parts, n_pvc = ["NN"], 0
    for _ in range(n_runs):
        k = int(rng.integers(1, 5))
        parts.append("V" * k + "NN")
        n_pvc += k
    labels = parse_label_script("".join(parts))
    assert worst_case_overhead(labels) == n_pvc + 2 * n_runs


def test_label_script_formats():
    assert parse_label_script("N,V, N") == [Label.NORMAL, Label.PVC, Label.NORMAL]
    assert parse_label_script("NVN") == [Label.NORMAL, Label.PVC, Label.NORMAL]


def test_step_after_flush_rejected():
    s = Streamer()
    s.flush()
    with pytest.raises(RuntimeError):
        s.step(0, "N")
