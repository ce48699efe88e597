import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcdict import codec
from pvcdict.codec import (EOB, ESC, OVER, UNDER, HuffmanCodebook, QuantTable, build_quant_tables,
                           calibrate_delta, compression_ratio, decode_beat, decode_bits, delta_sweep,
                           encode_beat, encode_code, envelope_from_curves, envelope_search,
                           huffman_lengths, quantize_code, quantize_value, quantized_values)
from pvcdict.exceptions import DataError, DecodeError
from pvcdict.sparse_core import Label, SparseCode, omp_solve, prd

N, V = Label.NORMAL, Label.PVC


def wide_table(delta, ranks=3):
    return QuantTable(np.full(ranks, -10.0), np.full(ranks, 10.0), delta)


# --- quantizer ------------------------------------------------------------

def test_quantize_in_range_positive():
    assert quantize_value(1.3, 1, wide_table(2.0)) == (1.0, 1)


def test_quantize_in_range_negative():
    assert quantize_value(-0.7, 1, wide_table(2.0)) == (-1.0, 0)


def test_quantize_clamps_at_range_edges():
    t = QuantTable(np.array([-1.0]), np.array([4.0]), 0.5)
    assert quantize_value(4.0, 1, t) == (4.25, OVER)
    assert quantize_value(1e6, 1, t) == (4.25, OVER)
    assert quantize_value(-1.01, 1, t) == (-1.25, UNDER)


@given(st.floats(-20, 20), st.floats(0.01, 5), st.integers(1, 6))
@settings(max_examples=200, deadline=None)
def test_quantize_error_at_most_half_step_in_range(x, delta, rank):
    t = wide_table(delta, ranks=4)
    q, lev = quantize_value(x, rank, t)
    if lev not in (UNDER, OVER):
        assert (lev - 1) * delta <= x + 1e-9 and x < lev * delta + 1e-9
        assert abs(q - x) <= delta / 2 + 1e-9
    assert codec.dequantize(lev, rank, t) == q


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=12), st.floats(0.05, 3))
@settings(max_examples=100, deadline=None)
def test_vectorized_quantizer_matches_scalar(vals, delta):
    t = QuantTable(np.array([-5.0, -8.0, -2.0]), np.array([6.0, 1.0, 2.0]), delta)
    vec = quantized_values(vals, t)
    ref = [quantize_value(v, r, t)[0] for r, v in enumerate(vals, 1)]
    assert np.allclose(vec, ref, rtol=0, atol=1e-12)


def test_tables_single_code():
    t = build_quant_tables([SparseCode([0, 1, 2], [1.0, 5.0, -3.0], 0.0)], 1.0)
    assert list(zip(t.w_min, t.w_max)) == [(5, 5), (-3, -3), (1, 1)]


def test_tables_two_codes_rank_one():
    t = build_quant_tables([SparseCode([0], [5.0], 0.0), SparseCode([3], [-6.0], 0.0)], 1.0)
    assert (t.w_min[0], t.w_max[0]) == (-6.0, 5.0)


def test_ranks_beyond_table_are_clamped_and_counted():
    t = build_quant_tables([SparseCode([0, 1], [2.0, 1.0], 0.0)], 0.5)
    _, levels, _, clamped = quantize_code(SparseCode([0, 1, 2, 3], [2.0, 1.0, 0.5, 0.25], 0.0), t)
    assert len(levels) == 4 and clamped == 2


def test_tables_empty_rejected():
    with pytest.raises(ValueError):
        build_quant_tables([], 1.0)


# --- Huffman --------------------------------------------------------------

@given(st.dictionaries(st.integers(-50, 50), st.integers(1, 1000), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_huffman_kraft_and_prefix_free(freqs):
    book = HuffmanCodebook.train([s for s, c in freqs.items() for _ in range(c)], 16, signed=True)
    assert book.kraft_sum() == pytest.approx(1.0)
    words = sorted(book.codes.values())
    for a, b in zip(words, words[1:]):
        assert not b.startswith(a)


def test_huffman_lengths_optimal_on_dyadic_source():
    lens = huffman_lengths({"a": 8, "b": 4, "c": 2, "d": 1, "e": 1})
    assert lens == {"a": 1, "b": 2, "c": 3, "d": 4, "e": 4}


@given(st.lists(st.integers(-(2 ** 20), 2 ** 20), min_size=1, max_size=60))
@settings(max_examples=100, deadline=None)
def test_huffman_roundtrip_with_escapes(symbols):
    book = HuffmanCodebook.train(symbols[: len(symbols) // 2], 32, signed=True)
    bits = book.encode(symbols)
    out, end = book.decode(bits, len(symbols))
    assert out == symbols and end == len(bits)


def test_huffman_decode_error_reports_offset():
    book = HuffmanCodebook({ESC: 1, 0: 2, 1: 2}, 4)
    with pytest.raises(DecodeError) as exc:
        book.decode_symbol("0", 0)  # escape with missing literal
    assert exc.value.offset == 1


def test_huffman_json_roundtrip():
    book = HuffmanCodebook.train([1, 1, 2, 3, EOB], 8, reserved=(UNDER, OVER), signed=True)
    assert HuffmanCodebook.from_json(book.to_json()) == book


# --- beat encoding ----------------------------------------------------------

def test_single_atom_beat_one_pair(trained):
    cm = trained.codec
    D = cm.normal.dictionary
    x = 3.0 * D.atoms[:, 10]
    enc = encode_beat(x, N, cm, 500)
    dec = decode_beat(enc, cm)
    assert dec.locations == [10] and len(dec.levels) == 1
    assert enc.class_bit == 0


def test_empty_payload_is_zero_vector(trained):
    cm = trained.codec
    payload, _ = encode_code(SparseCode([], [], 1.0, False), cm.normal)
    bits = "0" + cm.timestamp_book.encode_symbol(7) + payload
    dec = decode_beat(bits, cm)
    assert np.array_equal(dec.samples, np.zeros(cm.normal.dictionary.m))
    assert dec.timestamp == 7


def test_timestamps_are_differential(trained, small_corpus):
    cm = trained.codec
    beats = small_corpus[sorted(small_corpus)[4]].beats[:2]
    first = encode_beat(beats[0], N, cm, 1000)
    second = encode_beat(beats[1], N, cm, 1400, prev_timestamp=1000)
    assert cm.timestamp_book.decode_symbol(second.timestamp_bits, 0)[0] == 400
    assert decode_beat(second, cm, prev_timestamp=1000).timestamp == 1400
    assert decode_beat(first, cm).timestamp == 1000


def test_roundtrip_is_lossless_in_symbols(trained, small_corpus):
    cm = trained.codec
    beats = [b for b in small_corpus[sorted(small_corpus)[5]].beats if b.label in (N, V)][:40]
    encs = codec.encode_stream(beats, [b.label for b in beats], cm)
    decs = codec.decode_stream([e.bits for e in encs], cm)
    for b, e, d in zip(beats, encs, decs):
        cc = cm.for_label(b.label)
        code = omp_solve(cc.dictionary, b, cm.prd_int)
        locs, levels, qvals, _ = quantize_code(code, cc.table)
        assert d.label is b.label and d.timestamp == b.timestamp
        assert d.locations == locs.tolist() and d.levels == levels
        assert np.allclose(d.samples, cc.dictionary.atoms[:, locs] @ qvals, atol=1e-12)
        assert e.bit_count == len(e.bits)


def test_corpus_mean_prd_within_compression_target(small_corpus):
    # tables, step and books calibrated on the same 100 beats
    from pvcdict.ksvd import KsvdConfig, fit_ksvd
    from pvcdict.sparse_core import stack_beats
    normals = [b for rid in sorted(small_corpus) for b in small_corpus[rid].beats if b.label is N]
    train, beats = normals[:300], normals[300:400]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        D = fit_ksvd(stack_beats(train), KsvdConfig(n_atoms=301, sparsity=6, iterations=3)).dictionary
    codes = [omp_solve(D, b, 0.088) for b in beats]
    table = build_quant_tables(codes, 1.0)
    delta = calibrate_delta(beats, D, 0.088, 0.09, table, codes=codes)
    cc = codec.train_class_codec(D, codes, table.with_delta(delta))
    cm = codec.CodecModel(cc, cc, codec.train_timestamp_book([b.timestamp for b in beats]))
    errs = [prd(b.samples, decode_beat(encode_beat(b, N, cm, b.timestamp, code=c), cm).samples)
            for b, c in zip(beats, codes)]
    assert np.mean(errs) <= 0.09


def test_decode_errors(trained):
    cm = trained.codec
    with pytest.raises(DecodeError):
        decode_beat("", cm)
    enc = encode_beat(3.0 * cm.normal.dictionary.atoms[:, 4], N, cm, 10)
    with pytest.raises(DecodeError):
        decode_beat(enc.bits + "0", cm)
    with pytest.raises(DecodeError):
        decode_beat(enc.bits[:-1], cm)


@given(st.text(alphabet="01", min_size=1, max_size=200))
@settings(max_examples=150, deadline=None)
def test_random_bits_never_crash(trained, bits):
    try:
        decode_bits(bits, trained.codec)
    except DecodeError:
        pass


# --- ratio arithmetic -------------------------------------------------------

def _enc(payload, ts):
    return codec.EncodedBeat(0, "0" * payload, "0" * ts, 0.0, True)


@pytest.mark.parametrize("payload,ts,beta", [(3310, 0, 1.0), (65, 0, 3311 / 66), (40, 10, 3311 / 51)])
def test_compression_ratio(payload, ts, beta):
    assert compression_ratio(codec.original_bits(), _enc(payload, ts)) == pytest.approx(beta)
    assert beta == pytest.approx({1.0: 1.0, 3311 / 66: 50.17, 3311 / 51: 64.92}[beta], abs=0.01)


# --- step calibration -------------------------------------------------------

@pytest.fixture(scope="module")
def validation(trained, small_corpus):
    beats = [b for b in small_corpus[sorted(small_corpus)[4]].beats if b.label is N][:60]
    return beats, trained.codec.normal.dictionary


def test_sweep_prd_nondecreasing_in_delta(validation):
    beats, D = validation
    grid, prds = delta_sweep(beats, D, 0.088)
    assert np.all(np.diff(grid) > 0)
    assert np.all(np.diff(prds) >= -1e-3)  # quantization noise tolerance on a finite set


def test_no_degradation_budget_pushes_delta_to_grid_minimum(validation):
    beats, D = validation
    codes = [omp_solve(D, b, 0.09) for b in beats]
    grid = codec.delta_grid(codes)
    # OMP stops a little below its target, so the budget left for quantization
    # is zero only when the compression target equals the achieved mean PRD
    budget_free = float(np.mean([c.achieved_prd for c in codes]))
    _, prds = delta_sweep(beats, D, 0.09, grid=grid, codes=codes)
    feasible = grid[prds <= budget_free + 1e-12]
    assert feasible.size == 0 or feasible.max() <= grid[2]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d_eq = calibrate_delta(beats, D, 0.09, 0.09, codes=codes, grid=grid)
    d_88 = calibrate_delta(beats, D, 0.088, 0.09, grid=grid)
    assert d_eq < d_88


def test_no_feasible_step_warns(validation):
    beats, D = validation
    grid = np.array([50.0, 100.0])
    with pytest.warns(RuntimeWarning):
        assert calibrate_delta(beats, D, 0.088, 0.09, grid=grid) == 50.0


def test_halving_prd_int_never_increases_delta(validation):
    beats, D = validation
    grid = codec.delta_grid([omp_solve(D, b, 0.044) for b in beats])
    d_full = calibrate_delta(beats, D, 0.088, 0.09, grid=grid)
    d_half = calibrate_delta(beats, D, 0.044, 0.09, grid=grid)
    assert d_half <= d_full


# --- envelope -------------------------------------------------------------

def test_envelope_single_curve_equals_curve(validation):
    beats, D = validation
    env, curves = envelope_search(beats[:30], D, [0.088], [0.09, 0.2], grid_points=12)
    for e in env:
        ok = [p for p in curves[0] if p.prd <= e.prd_compr]
        if ok:
            assert e.ratio == max(p.ratio for p in ok)


def test_envelope_dominates_each_curve(validation):
    beats, D = validation
    axis = [0.09, 0.12, 0.2]
    env, curves = envelope_search(beats[:30], D, [0.05, 0.07, 0.088], axis, grid_points=12)
    for e in env:
        for c in curves:
            ok = [p.ratio for p in c if p.prd <= e.prd_compr]
            if ok:
                assert e.ratio >= max(ok)
    at9 = env[0]
    assert math.isnan(at9.ratio) or at9.prd_int < 0.09


def test_envelope_from_curves_empty_bin_is_nan():
    env = envelope_from_curves([[codec.CurvePoint(0.05, 1.0, 0.5, 3.0)]], [0.1])
    assert math.isnan(env[0].ratio)


# --- files ----------------------------------------------------------------

def test_stream_file_roundtrip(tmp_path, trained, small_corpus):
    cm = trained.codec
    beats = [b for b in small_corpus[sorted(small_corpus)[5]].beats if b.label in (N, V)][:12]
    encs = codec.encode_stream(beats, [b.label for b in beats], cm)
    codec.write_stream(tmp_path / "s.pvcs", "rec5", encs)
    rid, frames = codec.read_stream(tmp_path / "s.pvcs")
    assert rid == "rec5" and frames == [e.bits for e in encs]


def test_stream_file_rejects_corruption(tmp_path):
    codec.write_stream(tmp_path / "s.pvcs", "r", ["1011", "0"])
    data = (tmp_path / "s.pvcs").read_bytes()
    (tmp_path / "bad.pvcs").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(DataError):
        codec.read_stream(tmp_path / "bad.pvcs")
    (tmp_path / "short.pvcs").write_bytes(data[:-1])
    with pytest.raises(DataError):
        codec.read_stream(tmp_path / "short.pvcs")


@given(st.text(alphabet="01", max_size=100))
def test_pack_unpack(bits):
    assert codec.unpack_bits(codec.pack_bits(bits), len(bits)) == bits


def test_codebook_file_roundtrip(tmp_path, trained):
    cm = trained.codec
    codec.save_codebooks(cm, tmp_path / "cb.json")
    back = codec.load_codebooks(tmp_path / "cb.json", cm.normal.dictionary, cm.pvc.dictionary)
    assert back.timestamp_book == cm.timestamp_book
    assert back.normal.value_books == cm.normal.value_books
    assert np.array_equal(back.pvc.table.w_max, cm.pvc.table.w_max)
    x = 2.0 * cm.pvc.dictionary.atoms[:, 3]
    assert encode_beat(x, V, back, 5).bits == encode_beat(x, V, cm, 5).bits
