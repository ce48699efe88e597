"""Sparsity-ratio PVC detection against rival class dictionaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .exceptions import ConstraintError, DataError, UsageError
from .sparse_core import Dictionary, FidelityTarget, Label, SparseCode, as_target, omp_solve

DEFAULT_PRD_CLASS = 0.09

# Ratio reported when the normal-dictionary code is empty but the PVC one is not.
INF_RATIO = math.inf


@dataclass(frozen=True)
class ClassifierModel:
    d_normal: Dictionary
    d_pvc: Dictionary
    prd_class: FidelityTarget = FidelityTarget(DEFAULT_PRD_CLASS)
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "prd_class", as_target(self.prd_class))
        if self.d_normal.m != self.d_pvc.m:
            raise UsageError("normal and PVC dictionaries must share the signal dimension")
        if not self.tau >= 0:
            raise UsageError("tau must be nonnegative")

    def with_tau(self, tau: float) -> "ClassifierModel":
        return ClassifierModel(self.d_normal, self.d_pvc, self.prd_class, float(tau))


@dataclass(frozen=True)
class RocPoint:
    tau: float
    se: float
    sp: float


def ratio_from_codes(code_v: SparseCode, code_n: SparseCode) -> float:
    """Support-size ratio ``|alpha_V| / |alpha_N|`` with the 0/0 -> 1 convention."""
    nv, nn = code_v.nnz, code_n.nnz
    if nn == 0:
        return 1.0 if nv == 0 else INF_RATIO
    return nv / nn


def class_codes(model: ClassifierModel, x):
    return (
        omp_solve(model.d_pvc, x, model.prd_class),
        omp_solve(model.d_normal, x, model.prd_class),
    )


def sparsity_ratio(model: ClassifierModel, x) -> float:
    return ratio_from_codes(*class_codes(model, x))


def label_for_ratio(ratio: float, tau: float) -> Label:
    return Label.PVC if ratio < tau else Label.NORMAL


def classify_beat(model: ClassifierModel, x) -> Label:
    """PVC iff the sparsity ratio is strictly below ``tau``."""
    return label_for_ratio(sparsity_ratio(model, x), model.tau)


def classify_beats(model: ClassifierModel, beats) -> List[Label]:
    return [classify_beat(model, b) for b in beats]


def tau_grid(ratios: Iterable[float]) -> np.ndarray:
    """Observed finite ratios, their midpoints, and one point above the maximum."""
    r = np.unique(np.asarray([v for v in ratios if math.isfinite(v)], dtype=float))
    if r.size == 0:
        return np.array([1.0])
    mids = (r[:-1] + r[1:]) / 2.0
    top = r[-1] + max(1.0, abs(r[-1]))
    return np.unique(np.concatenate([r, mids, [top]]))


def roc_from_ratios(ratios, truth, taus=None) -> List[RocPoint]:
    """Threshold precomputed ratios at every ``tau``.

    Raises
    ------
    DataError
        If either class is absent, since Se or Sp would be undefined.
    """
    ratios = np.asarray(ratios, dtype=float)
    truth = [Label.parse(t) for t in truth]
    is_pvc = np.array([t is Label.PVC for t in truth])
    is_normal = np.array([t is Label.NORMAL for t in truth])
    if len(truth) != ratios.size:
        raise UsageError("one label per ratio is required")
    if not is_pvc.any() or not is_normal.any():
        raise DataError("ROC needs both PVC and normal beats; Se or Sp is undefined")
    if taus is None:
        taus = tau_grid(ratios)
    out = []
    n_pvc, n_norm = int(is_pvc.sum()), int(is_normal.sum())
    for tau in taus:
        flagged = ratios < tau
        tp = np.count_nonzero(flagged & is_pvc)
        tn = np.count_nonzero(~flagged & is_normal)
        out.append(RocPoint(float(tau), float(tp / n_pvc), float(tn / n_norm)))
    return out


def roc_sweep(model: ClassifierModel, beats: Sequence, taus=None, truth=None):
    """ROC over a labeled beat set; ratios are computed once.

    Returns
    -------
    roc : list of RocPoint
    ratios : ndarray
    """
    if truth is None:
        truth = [b.label for b in beats]
    ratios = np.array([sparsity_ratio(model, b) for b in beats])
    return roc_from_ratios(ratios, truth, taus), ratios


def pick_tau_for_sensitivity(roc: Sequence[RocPoint], target_se: float) -> RocPoint:
    """Grid point with ``Se >= target_se`` and maximal Sp (smallest tau on ties)."""
    if not roc:
        raise UsageError("empty ROC")
    feasible = [p for p in roc if p.se >= target_se]
    if not feasible:
        best = max(p.se for p in roc)
        raise ConstraintError(
            f"sensitivity target {target_se:.4f} unattainable; max achievable Se is {best:.4f}"
        )
    return min(feasible, key=lambda p: (-p.sp, p.tau))


def write_roc_csv(roc: Sequence[RocPoint], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "se", "sp"])
        for p in roc:
            w.writerow([repr(p.tau), repr(p.se), repr(p.sp)])


def read_roc_csv(path) -> List[RocPoint]:
    with Path(path).open(newline="") as fh:
        return [RocPoint(float(r["tau"]), float(r["se"]), float(r["sp"])) for r in csv.DictReader(fh)]
