"""Class-specific beat compression.

A beat is projected on its class dictionary at an intermediate PRD, the
nonzero coefficients are ranked by magnitude and uniformly quantized with
rank-dependent clamping ranges, and the quantized levels, atom locations
and differential timestamps are Huffman coded.

Bitstrings are plain ``str`` objects of ``'0'``/``'1'``; they are packed to
bytes only when written to a stream file.
"""
from __future__ import annotations

import heapq
import json
import math
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DataError, DecodeError, UsageError
from .sparse_core import (
    BEAT_LENGTH,
    Dictionary,
    Label,
    SparseCode,
    _samples,
    as_target,
    omp_solve,
    prd,
)

ESC = "ESC"
EOB = "EOB"
UNDER = "UNDER"
OVER = "OVER"

DEFAULT_ADC_BITS = 11
DEFAULT_PRD_INT = 0.088
DEFAULT_PRD_COMPR = 0.09
LEVEL_LITERAL_BITS = 32
TIMESTAMP_LITERAL_BITS = 32
DELTA_GRID_POINTS = 64


def original_bits(length: int = BEAT_LENGTH, adc_bits: int = DEFAULT_ADC_BITS) -> int:
    return length * adc_bits


# --- quantizer ------------------------------------------------------------

@dataclass(frozen=True)
class QuantTable:
    """Per-rank signed ranges and a shared step size.

    Index 0 of ``w_min``/``w_max`` holds rank 1 (largest magnitude).
    """

    w_min: np.ndarray
    w_max: np.ndarray
    delta: float

    def __post_init__(self):
        w_min = np.asarray(self.w_min, dtype=float)
        w_max = np.asarray(self.w_max, dtype=float)
        if w_min.shape != w_max.shape or w_min.ndim != 1:
            raise UsageError("w_min and w_max must be 1-D arrays of equal length")
        if np.any(w_min > w_max):
            raise UsageError("w_min must not exceed w_max")
        if not self.delta > 0:
            raise UsageError("quantizer step must be positive")
        object.__setattr__(self, "w_min", w_min)
        object.__setattr__(self, "w_max", w_max)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def max_rank(self) -> int:
        return int(self.w_min.size)

    def rank_slot(self, rank: int) -> int:
        """0-based table row for a 1-based rank, clamped to ``max_rank``."""
        if rank < 1:
            raise UsageError("ranks start at 1")
        return min(rank, self.max_rank) - 1

    def with_delta(self, delta: float) -> "QuantTable":
        return QuantTable(self.w_min, self.w_max, delta)

    def to_json(self):
        return {"w_min": self.w_min.tolist(), "w_max": self.w_max.tolist(), "delta": self.delta}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["w_min"]), np.array(obj["w_max"]), obj["delta"])


def quantize_value(x: float, rank: int, table: QuantTable):
    """Quantize one coefficient at a 1-based rank.

    Returns
    -------
    value : float
        Reconstruction value.
    level : int or str
        Integer ``k`` for in-range inputs, else ``UNDER`` or ``OVER``.
    """
    i = table.rank_slot(rank)
    d = table.delta
    if x < table.w_min[i]:
        return table.w_min[i] - d / 2, UNDER
    if x >= table.w_max[i]:
        return table.w_max[i] + d / 2, OVER
    k = math.floor(x / d) + 1
    return k * d - d / 2, k


def quantized_values(vals, table: QuantTable) -> np.ndarray:
    """Reconstruction values for coefficients already sorted by rank (vectorized)."""
    vals = np.asarray(vals, dtype=float)
    slots = np.minimum(np.arange(vals.size), table.max_rank - 1)
    lo, hi, d = table.w_min[slots], table.w_max[slots], table.delta
    q = (np.floor(vals / d) + 1) * d - d / 2
    q = np.where(vals >= hi, hi + d / 2, q)
    return np.where(vals < lo, lo - d / 2, q)


def dequantize(level, rank: int, table: QuantTable) -> float:
    i = table.rank_slot(rank)
    d = table.delta
    if level == UNDER:
        return table.w_min[i] - d / 2
    if level == OVER:
        return table.w_max[i] + d / 2
    return int(level) * d - d / 2


def build_quant_tables(codes: Sequence[SparseCode], delta: float) -> QuantTable:
    """Signed min/max of the i-th largest-magnitude coefficient across ``codes``."""
    codes = list(codes)
    if not codes:
        raise UsageError("cannot build quantizer tables from an empty code set")
    max_rank = max(c.nnz for c in codes)
    if max_rank == 0:
        raise UsageError("all training codes are empty")
    w_min = np.full(max_rank, np.inf)
    w_max = np.full(max_rank, -np.inf)
    for c in codes:
        _, vals = c.ranked()
        n = vals.size
        w_min[:n] = np.minimum(w_min[:n], vals)
        w_max[:n] = np.maximum(w_max[:n], vals)
    return QuantTable(w_min, w_max, delta)


def quantize_code(code: SparseCode, table: QuantTable):
    """Ranked (locations, levels, values) for a sparse code, plus clamped-rank count."""
    locs, vals = code.ranked()
    levels, qvals = [], []
    for r, v in enumerate(vals, 1):
        q, lev = quantize_value(float(v), r, table)
        levels.append(lev)
        qvals.append(q)
    clamped = max(0, code.nnz - table.max_rank)
    return locs, levels, np.array(qvals), clamped


def quantized_reconstruction(D: Dictionary, code: SparseCode, table: QuantTable) -> np.ndarray:
    locs, _, qvals, _ = quantize_code(code, table)
    if locs.size == 0:
        return np.zeros(D.m)
    return D.atoms[:, locs] @ qvals


# --- Huffman --------------------------------------------------------------

def _sort_key(sym):
    if isinstance(sym, (int, np.integer)):
        return (0, int(sym), "")
    return (1, 0, str(sym))


def huffman_lengths(freqs: Dict) -> Dict:
    """Optimal prefix-code lengths for a symbol -> count mapping (ties broken deterministically)."""
    items = sorted(((c, s) for s, c in freqs.items() if c > 0), key=lambda t: (t[0], _sort_key(t[1])))
    if not items:
        return {}
    if len(items) == 1:
        return {items[0][1]: 1}
    heap = [(c, i, [s]) for i, (c, s) in enumerate(items)]
    heapq.heapify(heap)
    lengths = {s: 0 for _, s in items}
    tiebreak = len(heap)
    while len(heap) > 1:
        c1, _, s1 = heapq.heappop(heap)
        c2, _, s2 = heapq.heappop(heap)
        for s in s1 + s2:
            lengths[s] += 1
        heapq.heappush(heap, (c1 + c2, tiebreak, s1 + s2))
        tiebreak += 1
    return lengths


class HuffmanCodebook:
    """Canonical Huffman code with an escape symbol for unseen inputs.

    An unseen symbol is written as the ``ESC`` codeword followed by a
    fixed-width literal (two's-complement offset when ``signed``).
    """

    def __init__(self, lengths: Dict, literal_bits: int, signed: bool = False):
        if ESC not in lengths:
            raise UsageError("codebook must contain the escape symbol")
        self.literal_bits = int(literal_bits)
        self.signed = bool(signed)
        self.lengths = dict(lengths)
        order = sorted(self.lengths, key=lambda s: (self.lengths[s], _sort_key(s)))
        codes = {}
        code = 0
        prev_len = 0
        for s in order:
            n = self.lengths[s]
            code <<= n - prev_len
            codes[s] = format(code, f"0{n}b")
            code += 1
            prev_len = n
        self.codes = codes
        self._decode = {v: k for k, v in codes.items()}
        self._max_len = max(self.lengths.values())

    @classmethod
    def train(cls, symbols: Iterable, literal_bits: int, reserved: Iterable = (), signed=False):
        freqs = Counter(symbols)
        for s in reserved:
            freqs[s] = max(freqs.get(s, 0), 1)
        freqs[ESC] = max(freqs.get(ESC, 0), 1)
        return cls(huffman_lengths(freqs), literal_bits, signed)

    def kraft_sum(self) -> float:
        return sum(2.0 ** -n for n in self.lengths.values())

    def __contains__(self, sym):
        return sym in self.codes

    def _literal(self, sym) -> str:
        if not isinstance(sym, (int, np.integer)):
            raise UsageError(f"symbol {sym!r} is not in the codebook and cannot be escaped")
        v = int(sym)
        if self.signed:
            v += 1 << (self.literal_bits - 1)
        if not 0 <= v < (1 << self.literal_bits):
            raise UsageError(f"symbol {sym} does not fit a {self.literal_bits}-bit literal")
        return format(v, f"0{self.literal_bits}b")

    def encode_symbol(self, sym) -> str:
        if isinstance(sym, np.integer):
            sym = int(sym)
        code = self.codes.get(sym)
        if code is not None and sym != ESC:
            return code
        return self.codes[ESC] + self._literal(sym)

    def encode(self, symbols: Iterable) -> str:
        return "".join(self.encode_symbol(s) for s in symbols)

    def symbol_bits(self, sym) -> int:
        code = self.codes.get(sym)
        if code is not None and sym != ESC:
            return len(code)
        return len(self.codes[ESC]) + self.literal_bits

    def decode_symbol(self, bits: str, pos: int):
        start = pos
        end = min(len(bits), pos + self._max_len)
        while pos < end:
            pos += 1
            sym = self._decode.get(bits[start:pos])
            if sym is None:
                continue
            if sym != ESC:
                return sym, pos
            lit_end = pos + self.literal_bits
            if lit_end > len(bits):
                raise DecodeError("truncated escape literal", pos)
            v = int(bits[pos:lit_end], 2)
            if self.signed:
                v -= 1 << (self.literal_bits - 1)
            return v, lit_end
        raise DecodeError("no codeword matches", start)

    def decode(self, bits: str, count: int):
        out, pos = [], 0
        for _ in range(count):
            sym, pos = self.decode_symbol(bits, pos)
            out.append(sym)
        return out, pos

    def to_json(self):
        return {
            "literal_bits": self.literal_bits,
            "signed": self.signed,
            "lengths": [[s if isinstance(s, int) else str(s), n]
                        for s, n in sorted(self.lengths.items(), key=lambda t: _sort_key(t[0]))],
        }

    @classmethod
    def from_json(cls, obj):
        return cls({s: int(n) for s, n in obj["lengths"]}, obj["literal_bits"], obj["signed"])

    def __eq__(self, other):
        return (isinstance(other, HuffmanCodebook) and self.lengths == other.lengths
                and self.literal_bits == other.literal_bits and self.signed == other.signed)


def _location_bits(n_atoms: int) -> int:
    return max(1, math.ceil(math.log2(max(n_atoms, 2))))


# --- models ---------------------------------------------------------------

@dataclass
class ClassCodec:
    """Dictionary, quantizer table and Huffman books for one beat class."""

    dictionary: Dictionary
    table: QuantTable
    value_books: List[HuffmanCodebook]
    location_book: HuffmanCodebook

    def value_book(self, rank: int) -> HuffmanCodebook:
        return self.value_books[min(rank, len(self.value_books)) - 1]


@dataclass
class CodecModel:
    normal: ClassCodec
    pvc: ClassCodec
    timestamp_book: HuffmanCodebook
    prd_int: float = DEFAULT_PRD_INT
    adc_bits: int = DEFAULT_ADC_BITS

    def for_label(self, label) -> ClassCodec:
        return self.pvc if Label.parse(label) is Label.PVC else self.normal

    def to_json(self):
        def cc(c: ClassCodec):
            return {
                "table": c.table.to_json(),
                "value_books": [b.to_json() for b in c.value_books],
                "location_book": c.location_book.to_json(),
            }
        return {
            "format": "pvcdict-codebooks",
            "version": 1,
            "prd_int": self.prd_int,
            "adc_bits": self.adc_bits,
            "normal": cc(self.normal),
            "pvc": cc(self.pvc),
            "timestamp_book": self.timestamp_book.to_json(),
        }

    @classmethod
    def from_json(cls, obj, d_normal: Dictionary, d_pvc: Dictionary):
        if obj.get("format") != "pvcdict-codebooks":
            raise DataError("not a codebook file")

        def cc(o, D):
            return ClassCodec(
                D,
                QuantTable.from_json(o["table"]),
                [HuffmanCodebook.from_json(b) for b in o["value_books"]],
                HuffmanCodebook.from_json(o["location_book"]),
            )
        return cls(cc(obj["normal"], d_normal), cc(obj["pvc"], d_pvc),
                   HuffmanCodebook.from_json(obj["timestamp_book"]), obj["prd_int"], obj["adc_bits"])


def save_codebooks(model: CodecModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=1, sort_keys=True))


def load_codebooks(path, d_normal: Dictionary, d_pvc: Dictionary) -> CodecModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return CodecModel.from_json(obj, d_normal, d_pvc)


def train_class_codec(D: Dictionary, codes: Sequence[SparseCode], table: QuantTable) -> ClassCodec:
    """Train per-rank value books and the location book on quantized training codes."""
    per_rank: List[list] = [[] for _ in range(table.max_rank)]
    locations = []
    for code in codes:
        locs, levels, _, _ = quantize_code(code, table)
        for r, lev in enumerate(levels, 1):
            per_rank[table.rank_slot(r)].append(lev)
        per_rank[table.rank_slot(len(levels) + 1)].append(EOB)
        locations.extend(int(l) for l in locs)
    value_books = [
        HuffmanCodebook.train(syms, LEVEL_LITERAL_BITS, reserved=(UNDER, OVER, EOB), signed=True)
        for syms in per_rank
    ]
    location_book = HuffmanCodebook.train(locations, _location_bits(D.n))
    return ClassCodec(D, table, value_books, location_book)


def train_timestamp_book(diffs: Iterable[int]) -> HuffmanCodebook:
    return HuffmanCodebook.train((int(d) for d in diffs), TIMESTAMP_LITERAL_BITS)


# --- encoding -------------------------------------------------------------

@dataclass
class EncodedBeat:
    """One transmitted beat: class bit, differential timestamp and payload.

    Diagnostics (achieved PRD, target flag, clamped ranks) ride along but are
    not part of the bitstream.
    """

    class_bit: int
    payload_bits: str
    timestamp_bits: str
    achieved_prd: float = float("nan")
    target_met: bool = True
    clamped_ranks: int = 0

    @property
    def bit_count(self) -> int:
        return 1 + len(self.payload_bits) + len(self.timestamp_bits)

    @property
    def bits(self) -> str:
        return str(self.class_bit) + self.timestamp_bits + self.payload_bits

    @property
    def label(self) -> Label:
        return Label.PVC if self.class_bit else Label.NORMAL


@dataclass
class DecodedBeat:
    samples: np.ndarray
    label: Label
    timestamp: int
    locations: List[int] = field(default_factory=list)
    levels: List = field(default_factory=list)


def encode_code(code: SparseCode, cc: ClassCodec) -> Tuple[str, int]:
    locs, levels, _, clamped = quantize_code(code, cc.table)
    parts = []
    for r, (loc, lev) in enumerate(zip(locs, levels), 1):
        parts.append(cc.value_book(r).encode_symbol(lev))
        parts.append(cc.location_book.encode_symbol(int(loc)))
    parts.append(cc.value_book(len(levels) + 1).encode_symbol(EOB))
    return "".join(parts), clamped


def encode_beat(x, label, model: CodecModel, timestamp: int, prev_timestamp: Optional[int] = None,
                code: Optional[SparseCode] = None) -> EncodedBeat:
    """Compress one beat with the dictionary of ``label``.

    ``prev_timestamp`` is the R-peak index of the previously transmitted
    beat; ``None`` sends the absolute index.
    """
    label = Label.parse(label)
    cc = model.for_label(label)
    if code is None:
        code = omp_solve(cc.dictionary, x, model.prd_int)
    payload, clamped = encode_code(code, cc)
    diff = int(timestamp) - (0 if prev_timestamp is None else int(prev_timestamp))
    if diff < 0:
        raise UsageError("timestamps must be non-decreasing within a stream")
    ts_bits = model.timestamp_book.encode_symbol(diff)
    return EncodedBeat(int(label is Label.PVC), payload, ts_bits, code.achieved_prd, code.target_met, clamped)


def decode_bits(bits: str, model: CodecModel, prev_timestamp: Optional[int] = None,
                offset: int = 0) -> Tuple[DecodedBeat, int]:
    """Decode one beat frame starting at ``offset``; returns the beat and the end position."""
    pos = offset
    if pos >= len(bits) or bits[pos] not in "01":
        raise DecodeError("missing class bit", pos)
    label = Label.PVC if bits[pos] == "1" else Label.NORMAL
    pos += 1
    cc = model.for_label(label)
    diff, pos = model.timestamp_book.decode_symbol(bits, pos)
    if not isinstance(diff, int):
        raise DecodeError("timestamp stream holds a non-integer symbol", pos)
    timestamp = diff + (0 if prev_timestamp is None else int(prev_timestamp))
    locations, levels, qvals = [], [], []
    rank = 1
    while True:
        sym, pos = cc.value_book(rank).decode_symbol(bits, pos)
        if sym == EOB:
            break
        if sym == ESC:
            raise DecodeError("unexpected escape symbol", pos)
        loc, pos = cc.location_book.decode_symbol(bits, pos)
        if not isinstance(loc, int) or not 0 <= loc < cc.dictionary.n:
            raise DecodeError(f"atom index {loc!r} out of range", pos)
        locations.append(loc)
        levels.append(sym)
        qvals.append(dequantize(sym, rank, cc.table))
        rank += 1
    if len(set(locations)) != len(locations):
        raise DecodeError("repeated atom location", pos)
    D = cc.dictionary
    samples = D.atoms[:, locations] @ np.array(qvals) if locations else np.zeros(D.m)
    return DecodedBeat(samples, label, timestamp, locations, levels), pos


def decode_beat(enc, model: CodecModel, prev_timestamp: Optional[int] = None) -> DecodedBeat:
    """Inverse of :func:`encode_beat`; ``enc`` is an EncodedBeat or a frame bitstring."""
    bits = enc.bits if isinstance(enc, EncodedBeat) else str(enc)
    beat, end = decode_bits(bits, model, prev_timestamp)
    if end != len(bits):
        raise DecodeError("trailing bits after frame", end)
    return beat


def compression_ratio(orig_bits: int, enc: EncodedBeat) -> float:
    return orig_bits / enc.bit_count


# --- calibration ----------------------------------------------------------

def delta_grid(codes: Sequence[SparseCode], points: int = DELTA_GRID_POINTS) -> np.ndarray:
    peak = max((float(np.max(np.abs(c.values))) for c in codes if c.nnz), default=0.0)
    if peak == 0:
        raise UsageError("no nonzero coefficients to scale the step grid")
    return np.geomspace(1e-4, 1.0, points) * peak


def mean_quantized_prd(beats, D: Dictionary, codes, table: QuantTable) -> float:
    errs = [prd(_samples(b), quantized_reconstruction(D, c, table)) for b, c in zip(beats, codes)]
    return float(np.mean(errs))


def delta_sweep(beats, D: Dictionary, prd_int, table: Optional[QuantTable] = None,
                grid: Optional[np.ndarray] = None, codes=None):
    """Mean end-to-end PRD of ``beats`` for every step on ``grid``.

    Returns
    -------
    grid, prds : ndarray
    """
    if codes is None:
        codes = [omp_solve(D, b, prd_int) for b in beats]
    if table is None:
        table = build_quant_tables(codes, 1.0)
    if grid is None:
        grid = delta_grid(codes)
    xs = [_samples(b) for b in beats]
    ranked = [c.ranked() for c in codes]
    sub = [D.atoms[:, locs] for locs, _ in ranked]
    prds = np.empty(len(grid))
    for g, d in enumerate(grid):
        t = table.with_delta(d)
        errs = [prd(x, A @ quantized_values(v, t)) if v.size else 1.0
                for x, A, (_, v) in zip(xs, sub, ranked)]
        prds[g] = np.mean(errs)
    return np.asarray(grid), prds


def calibrate_delta(beats, D: Dictionary, prd_int, prd_compr, table: Optional[QuantTable] = None,
                    grid: Optional[np.ndarray] = None, codes=None) -> float:
    """Largest grid step whose mean end-to-end PRD stays within ``prd_compr``.

    ``table`` supplies the per-rank ranges (normally built on training
    codes); when omitted the ranges come from ``beats`` themselves.
    """
    prd_int = as_target(prd_int).prd_limit
    prd_compr = as_target(prd_compr).prd_limit
    if prd_int > prd_compr:
        raise UsageError("prd_int must not exceed prd_compr")
    beats = list(beats)
    if not beats:
        raise UsageError("no validation beats")
    grid, prds = delta_sweep(beats, D, prd_int, table, grid, codes)
    ok = np.flatnonzero(prds <= prd_compr)
    if ok.size == 0:
        warnings.warn(
            f"no step on the grid meets PRD {prd_compr:.4f}; using the smallest step",
            RuntimeWarning,
            stacklevel=2,
        )
        return float(grid[0])
    return float(grid[ok[-1]])


# --- envelope search ------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    prd_int: float
    delta: float
    prd: float
    ratio: float


@dataclass(frozen=True)
class EnvelopePoint:
    prd_compr: float
    ratio: float
    prd_int: float
    delta: float


def _timestamp_bits_total(beats) -> int:
    diffs = []
    prev = {}
    for b in beats:
        rid = getattr(b, "record_id", "")
        ts = int(getattr(b, "timestamp", 0))
        diffs.append(ts - prev.get(rid, 0))
        prev[rid] = ts
    lengths = huffman_lengths(Counter(diffs))
    if len(lengths) == 1:
        return len(diffs)
    return sum(lengths[d] for d in diffs)


def rate_curve(beats, D: Dictionary, prd_int: float, grid=None, adc_bits=DEFAULT_ADC_BITS) -> List[CurvePoint]:
    """(PRD, compression ratio) pairs over a step grid for one ``prd_int``.

    Books are trained in-sample on ``beats``, so the ratio is the empirical
    entropy-coded rate of this set.
    """
    beats = list(beats)
    codes = [omp_solve(D, b, prd_int) for b in beats]
    table = build_quant_tables(codes, 1.0)
    if grid is None:
        grid = delta_grid(codes)
    ts_bits = _timestamp_bits_total(beats)
    total_orig = sum(original_bits(len(_samples(b)), adc_bits) for b in beats)
    out = []
    for d in grid:
        t = table.with_delta(d)
        cc = train_class_codec(D, codes, t)
        bits = ts_bits + len(beats)
        for code in codes:
            payload, _ = encode_code(code, cc)
            bits += len(payload)
        p = mean_quantized_prd(beats, D, codes, t)
        out.append(CurvePoint(float(prd_int), float(d), p, total_orig / bits))
    return out


def envelope_from_curves(curves: Sequence[Sequence[CurvePoint]], prd_axis) -> List[EnvelopePoint]:
    """Best ratio reachable with PRD at most each axis value, over all curves."""
    pts = [p for c in curves for p in c]
    out = []
    for target in prd_axis:
        ok = [p for p in pts if p.prd <= target]
        if not ok:
            out.append(EnvelopePoint(float(target), float("nan"), float("nan"), float("nan")))
            continue
        best = max(ok, key=lambda p: (p.ratio, -p.prd_int))
        out.append(EnvelopePoint(float(target), best.ratio, best.prd_int, best.delta))
    return out


def envelope_search(beats, D: Dictionary, prd_int_grid, prd_axis, grid_points: int = DELTA_GRID_POINTS):
    """Upper envelope of ratio-versus-PRD curves across intermediate PRD targets.

    Returns
    -------
    envelope : list of EnvelopePoint
    curves : list of list of CurvePoint
    """
    beats = list(beats)
    if not beats or len(prd_int_grid) == 0 or len(prd_axis) == 0:
        raise UsageError("envelope search needs beats and nonempty grids")
    curves = []
    for p in prd_int_grid:
        codes = [omp_solve(D, b, p) for b in beats]
        grid = delta_grid(codes, grid_points)
        curves.append(rate_curve(beats, D, p, grid))
    return envelope_from_curves(curves, prd_axis), curves


# --- stream files ---------------------------------------------------------

STREAM_MAGIC = b"PVCS"
STREAM_VERSION = 1


def pack_bits(bits: str) -> bytes:
    if not bits:
        return b""
    pad = (-len(bits)) % 8
    return int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")


def unpack_bits(data: bytes, n_bits: int) -> str:
    if n_bits == 0:
        return ""
    return format(int.from_bytes(data, "big"), f"0{len(data) * 8}b")[:n_bits]


def write_stream(path, record_id: str, frames: Sequence) -> None:
    """Magic, version, record id, then length-prefixed frames."""
    rid = record_id.encode()
    out = bytearray(STREAM_MAGIC)
    out += struct.pack(">BH", STREAM_VERSION, len(rid)) + rid
    out += struct.pack(">I", len(frames))
    for f in frames:
        bits = f.bits if isinstance(f, EncodedBeat) else f
        out += struct.pack(">I", len(bits)) + pack_bits(bits)
    Path(path).write_bytes(bytes(out))


def read_stream(path) -> Tuple[str, List[str]]:
    data = Path(path).read_bytes()
    if data[:4] != STREAM_MAGIC:
        raise DataError(f"{path}: bad magic")
    try:
        version, rlen = struct.unpack_from(">BH", data, 4)
        if version != STREAM_VERSION:
            raise DataError(f"{path}: unsupported stream version {version}")
        pos = 7
        rid = data[pos:pos + rlen].decode()
        pos += rlen
        (count,) = struct.unpack_from(">I", data, pos)
        pos += 4
        frames = []
        for _ in range(count):
            (n_bits,) = struct.unpack_from(">I", data, pos)
            pos += 4
            nbytes = (n_bits + 7) // 8
            chunk = data[pos:pos + nbytes]
            if len(chunk) != nbytes:
                raise DataError(f"{path}: truncated frame")
            frames.append(unpack_bits(chunk, n_bits))
            pos += nbytes
    except struct.error:
        raise DataError(f"{path}: truncated stream") from None
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes")
    return rid, frames


def encode_stream(beats, labels, model: CodecModel) -> List[EncodedBeat]:
    """Encode beats in order, chaining differential timestamps."""
    out, prev = [], None
    for b, lab in zip(beats, labels):
        enc = encode_beat(b, lab, model, b.timestamp, prev)
        out.append(enc)
        prev = b.timestamp
    return out


def decode_stream(frames: Sequence, model: CodecModel) -> List[DecodedBeat]:
    out, prev = [], None
    for f in frames:
        d = decode_beat(f, model, prev)
        out.append(d)
        prev = d.timestamp
    return out
