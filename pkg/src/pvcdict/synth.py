"""Synthetic ECG-like records with planted normal and PVC morphologies.

Each wave is a Gaussian bump placed relative to the R peak. Normal beats
have P, QRS and T waves; PVCs have no P wave, a wide QRS and an inverted T.
Every record gets its own morphology perturbation so that records behave
like distinct patients, and every beat gets a smaller per-beat jitter.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .preprocess import Annotation, RawRecord, write_annotations, write_record
from .sparse_core import Label

# (amplitude mV, centre s, width s)
NORMAL_WAVES = np.array([
    [0.15, -0.20, 0.025],
    [-0.10, -0.035, 0.010],
    [1.00, 0.000, 0.012],
    [-0.25, 0.035, 0.010],
    [0.30, 0.250, 0.045],
])
PVC_WAVES = np.array([
    [1.10, 0.000, 0.035],
    [-0.60, 0.080, 0.040],
    [-0.40, 0.300, 0.070],
])


@dataclass
class SynthRecord:
    record: RawRecord
    annotations: List[Annotation]

    @property
    def n_pvc(self):
        return sum(a.label is Label.PVC for a in self.annotations)


def _perturb(waves, rng, amp_sd, pos_sd, width_sd):
    w = waves.copy()
    w[:, 0] *= 1 + amp_sd * rng.standard_normal(len(w))
    w[:, 1] += pos_sd * rng.standard_normal(len(w))
    w[:, 2] *= np.exp(width_sd * rng.standard_normal(len(w)))
    return w


def _render(signal, waves, r_index, fs):
    half = int(0.6 * fs)
    lo, hi = max(0, r_index - half), min(signal.size, r_index + half + 1)
    t = (np.arange(lo, hi) - r_index) / fs
    for amp, mu, sd in waves:
        signal[lo:hi] += amp * np.exp(-0.5 * ((t - mu) / sd) ** 2)


def synth_record(record_id: str, rng: np.random.Generator, pvc_rate: float,
                 duration_s: float = 300.0, fs: float = 360.0, noise_mv: float = 0.01,
                 drift_mv: float = 0.1) -> SynthRecord:
    if not 0.0 <= pvc_rate <= 1.0:
        raise ValueError("pvc_rate must lie in [0, 1]")
    n = int(duration_s * fs)
    normal = _perturb(NORMAL_WAVES, rng, 0.15, 0.004, 0.1)
    pvc = _perturb(PVC_WAVES, rng, 0.15, 0.006, 0.1)
    rr_mean = rng.uniform(0.72, 0.95)
    sig = np.zeros(n)
    anns = []
    t = 0.5 + rng.uniform(0, 0.3)
    prev_pvc = False
    is_pvc = rng.random() < pvc_rate
    while t < duration_s - 0.5:
        if is_pvc:
            waves, lab = _perturb(pvc, rng, 0.05, 0.002, 0.05), Label.PVC
        else:
            waves, lab = _perturb(normal, rng, 0.05, 0.002, 0.05), Label.NORMAL
        r = int(round(t * fs))
        _render(sig, waves, r, fs)
        anns.append(Annotation(r, lab))
        rr = rr_mean + 0.03 * rng.standard_normal()
        # a PVC arrives early and is followed by a compensatory pause
        nxt_pvc = rng.random() < pvc_rate
        t += rr * (0.7 if nxt_pvc else (1.3 if prev_pvc or is_pvc else 1.0))
        prev_pvc, is_pvc = is_pvc, nxt_pvc
    time = np.arange(n) / fs
    phase = rng.uniform(0, 2 * np.pi, size=2)
    sig += drift_mv * np.sin(2 * np.pi * 0.15 * time + phase[0])
    sig += 0.5 * drift_mv * np.sin(2 * np.pi * 0.04 * time + phase[1])
    sig += noise_mv * rng.standard_normal(n)
    return SynthRecord(RawRecord(sig, fs, 11, record_id), anns)


def synth_corpus(n_records: int, pvc_rate, seed: int = 0, duration_s: float = 300.0,
                 fs: float = 360.0, prefix: str = "s") -> List[SynthRecord]:
    """Generate ``n_records`` records.

    ``pvc_rate`` is either one rate for all records or a sequence with one
    rate per record.
    """
    rates = np.broadcast_to(np.asarray(pvc_rate, dtype=float), (n_records,))
    seq = np.random.SeedSequence(seed)
    out = []
    for i, (child, rate) in enumerate(zip(seq.spawn(n_records), rates)):
        rng = np.random.default_rng(child)
        out.append(synth_record(f"{prefix}{i:03d}", rng, float(rate), duration_s, fs))
    return out


def write_corpus(records: Sequence[SynthRecord], out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sr in records:
        rp = out_dir / f"{sr.record.record_id}.csv"
        write_record(sr.record, rp)
        write_annotations(sr.annotations, out_dir / f"{sr.record.record_id}.ann.csv")
        paths.append(rp)
    return paths


def varied_rates(n_records: int, seed: int = 0, low: float = 0.0, high: float = 0.3,
                 zero_fraction: float = 0.2) -> np.ndarray:
    """Per-record PVC rates with a share of PVC-free records, for partition experiments."""
    rng = np.random.default_rng(seed)
    rates = rng.uniform(low, high, n_records)
    rates[rng.random(n_records) < zero_fraction] = 0.0
    return rates

