"""Closed-form bandwidth fractions and monitoring cost.

All bandwidths are fractions of the raw-ECG reference stream.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .exceptions import UsageError

BYTES_PER_KB = 1000
DEFAULT_TARIFF_CENTS = 1.5  # US cents per 100 kB


@dataclass(frozen=True)
class OperatingPoint:
    se: float
    sp: float
    rho: float
    beta_n: float = 1.0
    beta_v: float = 1.0

    def __post_init__(self):
        for name in ("se", "sp", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {v}")
        if self.beta_n < 1 or self.beta_v < 1:
            raise UsageError("compression ratios must be >= 1")

    @property
    def flagged_fraction(self) -> float:
        """Fraction of all beats declared PVC."""
        return self.se * self.rho + (1.0 - self.sp) * (1.0 - self.rho)


@dataclass(frozen=True)
class CostModel:
    fs: float = 360.0
    adc_bits: int = 11
    tariff: float = DEFAULT_TARIFF_CENTS
    hours: float = 10.0

    def __post_init__(self):
        if min(self.fs, self.adc_bits, self.tariff, self.hours) <= 0:
            raise UsageError("cost model parameters must be positive")


@dataclass(frozen=True)
class Cost:
    bytes: float
    cents: float

    @property
    def megabytes(self) -> float:
        return self.bytes / 1e6

    @property
    def dollars(self) -> float:
        return self.cents / 100.0


def b_classification_only(op: OperatingPoint) -> float:
    return 3.0 * op.flagged_fraction


def b_compression_only(op: OperatingPoint) -> float:
    return op.rho / op.beta_v + (1.0 - op.rho) / op.beta_n


def b_trio(op: OperatingPoint) -> float:
    return op.flagged_fraction * (1.0 / op.beta_v + 2.0 / op.beta_n)


def monitoring_cost(b: float, cm: CostModel = CostModel()) -> Cost:
    """Data volume and tariff for transmitting fraction ``b`` of the raw stream."""
    if b < 0:
        raise UsageError("bandwidth fraction must be nonnegative")
    volume = cm.fs * cm.adc_bits * 3600.0 * cm.hours / 8.0 * b
    return Cost(volume, volume / (100.0 * BYTES_PER_KB) * cm.tariff)


def bandwidth_table(op: OperatingPoint, cm: CostModel = CostModel()):
    rows = [("raw", 1.0)]
    rows.append(("classification_only", b_classification_only(op)))
    rows.append(("compression_only", b_compression_only(op)))
    rows.append(("trio", b_trio(op)))
    return [(name, b, monitoring_cost(b, cm)) for name, b in rows]


def write_reliability_cost_csv(points: Iterable[tuple], path, cm: CostModel = CostModel()) -> None:
    """Rows of (name, OperatingPoint) to the reliability-versus-cost plane.

    Columns: miss rate ``1 - Se``, bandwidth with classification only and with
    trio compression, and the matching costs in cents.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "miss_rate", "b_cl", "b_tr", "cost_cl_cents", "cost_tr_cents"])
        for name, op in points:
            bcl, btr = b_classification_only(op), b_trio(op)
            w.writerow([name, repr(1 - op.se), repr(bcl), repr(btr),
                        repr(monitoring_cost(bcl, cm).cents), repr(monitoring_cost(btr, cm).cents)])
