"""Baseline-wander removal and R-peak anchored beat segmentation.

Record and annotation CSV files stand in for the source database format:

* record: ``# fs=360`` and ``# adc_bits=11`` header lines (optionally
  ``# record_id=...``), then one sample per line;
* annotations: ``sample_index,label`` rows with labels N, V or O.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
from scipy import ndimage

from .exceptions import DataError, DomainError, UsageError
from .sparse_core import BEAT_LENGTH, BeatVector, Label

log = logging.getLogger(__name__)

SHORT_WINDOW_S = 0.2
LONG_WINDOW_S = 0.6
HALF_WIDTH = (BEAT_LENGTH - 1) // 2


@dataclass
class RawRecord:
    samples: np.ndarray
    fs: float = 360.0
    adc_bits: int = 11
    record_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise UsageError("record samples must be a nonempty 1-D array")
        if not self.fs > 0:
            raise UsageError("fs must be positive")


@dataclass(frozen=True)
class Annotation:
    r_peak: int
    label: Label

    def __post_init__(self):
        object.__setattr__(self, "r_peak", int(self.r_peak))
        object.__setattr__(self, "label", Label.parse(self.label))


@dataclass
class Segmentation:
    beats: List[BeatVector]
    skipped: List[Annotation] = field(default_factory=list)

    @property
    def skipped_count(self):
        return len(self.skipped)


def odd_window(seconds: float, fs: float) -> int:
    """Window length in samples, rounded up to the next odd integer."""
    n = int(round(seconds * fs))
    return n if n % 2 else n + 1


def median_filter(x, window: int) -> np.ndarray:
    """Sliding median with boundary replication; output length equals input length.

    Even windows are bumped to the next odd size.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise UsageError("median_filter needs a nonempty signal")
    window = int(window)
    if window < 1:
        raise UsageError("window must be positive")
    if window % 2 == 0:
        window += 1
    if window > x.size:
        raise UsageError(f"window {window} exceeds signal length {x.size}")
    return ndimage.median_filter(x, size=window, mode="nearest")


def remove_baseline(rec: RawRecord, short_s=SHORT_WINDOW_S, long_s=LONG_WINDOW_S) -> np.ndarray:
    """Subtract the cascaded 200 ms / 600 ms median baseline estimate."""
    w1 = odd_window(short_s, rec.fs)
    w2 = odd_window(long_s, rec.fs)
    if rec.samples.size < w2:
        raise UsageError(
            f"record {rec.record_id!r} has {rec.samples.size} samples, shorter than {long_s * 1000:.0f} ms"
        )
    baseline = median_filter(median_filter(rec.samples, w1), w2)
    return rec.samples - baseline


def segment_beats(clean, anns: Sequence[Annotation], record_id: str = "") -> Segmentation:
    """Cut a 301-sample window around every annotated R peak.

    Annotations without 150 samples of context on both sides, or whose
    window is identically zero, are skipped and returned in ``skipped``.
    """
    clean = np.asarray(clean, dtype=float)
    beats, skipped = [], []
    for ann in anns:
        lo, hi = ann.r_peak - HALF_WIDTH, ann.r_peak + HALF_WIDTH + 1
        if lo < 0 or hi > clean.size:
            skipped.append(ann)
            continue
        try:
            beats.append(BeatVector(clean[lo:hi].copy(), ann.r_peak, ann.label, record_id))
        except DomainError:
            skipped.append(ann)
    if skipped:
        log.debug("record %s: skipped %d of %d annotations", record_id, len(skipped), len(anns))
    return Segmentation(beats, skipped)


def validate_annotations(anns: Sequence[Annotation], n_samples: int) -> None:
    last = -1
    for a in anns:
        if not 0 <= a.r_peak < n_samples:
            raise DataError(f"annotation at {a.r_peak} outside record of length {n_samples}")
        if a.r_peak <= last:
            raise DataError(f"annotations not strictly increasing at sample {a.r_peak}")
        last = a.r_peak


def preprocess_record(rec: RawRecord, anns: Sequence[Annotation]) -> Segmentation:
    validate_annotations(anns, rec.samples.size)
    return segment_beats(remove_baseline(rec), anns, rec.record_id)


# --- CSV I/O --------------------------------------------------------------

def read_record(path, record_id=None) -> RawRecord:
    path = Path(path)
    header = {}
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                header[key.strip()] = val.strip()
                continue
            try:
                values.append(float(line.split(",")[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not values:
        raise DataError(f"{path}: no samples")
    try:
        fs = float(header.get("fs", 360))
        bits = int(header.get("adc_bits", 11))
    except ValueError:
        raise DataError(f"{path}: malformed header") from None
    rid = record_id or header.get("record_id") or path.stem
    return RawRecord(np.array(values), fs, bits, rid)


def write_record(rec: RawRecord, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# fs={rec.fs:g}\n# adc_bits={rec.adc_bits}\n# record_id={rec.record_id}\n")
        for v in rec.samples:
            fh.write(f"{v:.6f}\n")


def read_annotations(path) -> List[Annotation]:
    path = Path(path)
    anns = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if row[0].strip() == "sample_index":
                continue
            try:
                anns.append(Annotation(int(row[0]), row[1]))
            except (ValueError, IndexError, UsageError):
                raise DataError(f"{path}:{lineno}: bad annotation row {row!r}") from None
    return anns


def write_annotations(anns: Iterable[Annotation], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "label"])
        for a in anns:
            w.writerow([a.r_peak, a.label.value])


def samples_for_minutes(minutes: float, fs: float) -> int:
    return int(math.floor(minutes * 60.0 * fs))
