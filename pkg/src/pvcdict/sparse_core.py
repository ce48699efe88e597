"""Dictionaries, PRD-bounded orthogonal matching pursuit and the PRD metric.

All fidelity values are fractions (0.09 means 9 %). Percentages only appear
at I/O boundaries.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg.lapack import dtrtrs

from .exceptions import DomainError, UsageError

BEAT_LENGTH = 301
UNIT_NORM_TOL = 1e-9


class Label(str, enum.Enum):
    NORMAL = "N"
    PVC = "V"
    OTHER = "O"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        text = str(value).strip().upper()
        aliases = {"NORMAL": "N", "PVC": "V", "0": "N", "1": "V"}
        text = aliases.get(text, text)
        try:
            return cls(text)
        except ValueError:
            raise UsageError(f"unknown beat label {value!r}") from None


@dataclass(frozen=True)
class BeatVector:
    """One segmented heartbeat centred on its R peak."""

    samples: np.ndarray
    timestamp: int
    label: Optional[Label] = None
    record_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise UsageError("beat samples must be one-dimensional")
        if not np.linalg.norm(samples) > 0:
            raise DomainError("beat has zero euclidean norm")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.label is not None:
            object.__setattr__(self, "label", Label.parse(self.label))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def key(self):
        return (self.record_id, int(self.timestamp))


@dataclass(frozen=True)
class FidelityTarget:
    prd_limit: float

    def __post_init__(self):
        if not 0.0 < float(self.prd_limit) < 1.0:
            raise UsageError(f"prd_limit must lie in (0, 1), got {self.prd_limit}")


def as_target(target) -> FidelityTarget:
    if isinstance(target, FidelityTarget):
        return target
    return FidelityTarget(float(target))


class Dictionary:
    """Overcomplete dictionary with unit-norm columns.

    Parameters
    ----------
    atoms : array_like, shape (m, n)
        Columns are atoms. Must satisfy ``n >= m`` and unit column norms.
    class_tag : Label or str, optional
    meta : dict, optional
        Free-form training metadata (seed, T0, iterations) carried to disk.
    """

    def __init__(self, atoms, class_tag=None, meta=None, *, check_overcomplete=True):
        atoms = np.array(atoms, dtype=float, copy=True)
        if atoms.ndim != 2:
            raise UsageError("dictionary atoms must be a 2-D array")
        m, n = atoms.shape
        if check_overcomplete and n < m:
            raise UsageError(f"dictionary must be overcomplete, got {m}x{n}")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise UsageError(f"atom {worst} has norm {norms[worst]!r}, expected 1")
        atoms.setflags(write=False)
        self.atoms = atoms
        self.class_tag = None if class_tag is None else Label.parse(class_tag)
        self.meta = dict(meta or {})
        self._gram = None

    @classmethod
    def from_unnormalized(cls, atoms, class_tag=None, meta=None, **kw):
        atoms = np.asarray(atoms, dtype=float)
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms == 0):
            raise UsageError("cannot normalize a zero atom")
        return cls(atoms / norms, class_tag, meta, **kw)

    @property
    def shape(self):
        return self.atoms.shape

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def n(self):
        return self.atoms.shape[1]

    @property
    def gram(self):
        if self._gram is None:
            self._gram = self.atoms.T @ self.atoms
        return self._gram

    def __repr__(self):
        tag = self.class_tag.value if self.class_tag else None
        return f"Dictionary(shape={self.shape}, class_tag={tag!r})"


@dataclass(frozen=True)
class SparseCode:
    """Sparse representation of one signal.

    ``support`` keeps the OMP selection order. ``target_met`` is False when
    the solver stopped on ``max_atoms`` or stalled before reaching the PRD
    target.
    """

    support: np.ndarray
    values: np.ndarray
    achieved_prd: float
    target_met: bool = True

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if support.shape != values.shape:
            raise UsageError("support and values must have equal length")
        if len(np.unique(support)) != len(support):
            raise UsageError("support indices must be unique")
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return int(self.support.shape[0])

    def __len__(self):
        return self.nnz

    def ranked(self):
        """Return (locations, values) ordered by descending ``|value|``.

        Ties keep selection order so the ranking is deterministic.
        """
        order = np.argsort(-np.abs(self.values), kind="stable")
        return self.support[order], self.values[order]


def prd(x, xhat) -> float:
    """Normalized reconstruction error ``||x - xhat|| / ||x||`` as a fraction."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    if x.shape != xhat.shape:
        raise UsageError(f"length mismatch: {x.shape} vs {xhat.shape}")
    norm = np.linalg.norm(x)
    if not norm > 0:
        raise DomainError("PRD undefined for a zero-norm reference signal")
    return float(np.linalg.norm(x - xhat) / norm)


def _samples(x):
    if isinstance(x, BeatVector):
        return x.samples
    return np.asarray(x, dtype=float)


def reconstruct(D: Dictionary, code: SparseCode) -> np.ndarray:
    """Linear combination of the atoms named in ``code``."""
    if code.nnz == 0:
        return np.zeros(D.m)
    if code.support.min() < 0 or code.support.max() >= D.n:
        raise UsageError(f"support index out of range for dictionary with {D.n} atoms")
    return D.atoms[:, code.support] @ code.values


def omp_solve(D: Dictionary, x, target, max_atoms: Optional[int] = None) -> SparseCode:
    """Greedy OMP that stops once the relative residual reaches ``target``.

    Parameters
    ----------
    D : Dictionary
    x : array_like or BeatVector
        Signal of length ``D.m`` with nonzero norm.
    target : FidelityTarget or float
        Stop as soon as ``||r|| / ||x|| <= target.prd_limit``.
    max_atoms : int, optional
        Hard cap on support size, defaults to ``D.m``.

    Returns
    -------
    SparseCode
        ``target_met`` is False if the cap was hit or the residual stopped
        shrinking (reduction below ``1e-12 * ||x||`` in one iteration).

    Notes
    -----
    The least-squares refit on the active set uses an incrementally updated
    Cholesky factor of the Gram submatrix. Selection ties go to the lowest
    atom index.
    """
    target = as_target(target)
    x = _samples(x)
    if x.shape != (D.m,):
        raise UsageError(f"signal length {x.shape} does not match dictionary rows {D.m}")
    xnorm = np.linalg.norm(x)
    if not xnorm > 0:
        raise DomainError("cannot sparse-code a zero-norm signal")
    if max_atoms is None:
        max_atoms = D.m
    if not 0 <= max_atoms <= D.m:
        raise UsageError(f"max_atoms must lie in [0, {D.m}], got {max_atoms}")

    atoms = D.atoms
    gram = D.gram
    limit = target.prd_limit * xnorm
    stall = 1e-12 * xnorm
    support: list[int] = []
    L = np.zeros((max_atoms, max_atoms), order="F")
    Ds = np.zeros((D.m, max_atoms), order="F")  # selected atoms
    Gs = np.zeros((D.n, max_atoms), order="F")  # their Gram columns
    corr0 = atoms.T @ x
    corr = corr0.copy()
    coef = np.zeros(0)
    rnorm = xnorm
    met = rnorm <= limit
    while not met and len(support) < max_atoms:
        score = np.abs(corr)
        if support:
            score[support] = -1.0
        j = int(np.argmax(score))
        k = len(support)
        if k == 0:
            L[0, 0] = 1.0
        else:
            w, _ = dtrtrs(L[:k, :k], gram[support, j], lower=1)
            diag2 = 1.0 - w @ w
            if diag2 <= 1e-14:
                break  # atom lies in the span of the active set
            L[k, :k] = w
            L[k, k] = np.sqrt(diag2)
        support.append(j)
        Ds[:, k] = atoms[:, j]
        Gs[:, k] = gram[:, j]
        k += 1
        y, _ = dtrtrs(L[:k, :k], corr0[support], lower=1)
        coef, _ = dtrtrs(L[:k, :k], y, lower=1, trans=1)
        corr = corr0 - Gs[:, :k] @ coef
        new_norm = np.linalg.norm(x - Ds[:, :k] @ coef)
        progressed = rnorm - new_norm >= stall
        rnorm = new_norm
        met = rnorm <= limit
        if not met and not progressed:
            break

    code_prd = float(np.linalg.norm(x - atoms[:, support] @ coef) / xnorm) if support else 1.0
    return SparseCode(np.array(support, dtype=np.int64), coef, code_prd, bool(met))


def omp_batch(D: Dictionary, X, n_nonzero: int, tol: float = 1e-12, chunk: int = 512):
    """Fixed-sparsity OMP applied to every column of ``X``.

    Used by the K-SVD sparse-coding stage. A column stops early once its
    residual falls below ``tol`` times its norm.

    Returns
    -------
    coefs : ndarray, shape (n, M)
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m, M = X.shape
    atoms = D.atoms
    n = D.n
    T = int(min(n_nonzero, m))
    out = np.zeros((n, M))
    gram = D.gram
    for start in range(0, M, chunk):
        Xc = X[:, start:start + chunk]
        c = Xc.shape[1]
        norms = np.linalg.norm(Xc, axis=0)
        corr0 = atoms.T @ Xc  # (n, c)
        idx = np.zeros((c, T), dtype=np.int64)
        active = norms > 0
        count = np.zeros(c, dtype=np.int64)
        R = Xc.copy()
        coef = np.zeros((c, T))
        for k in range(T):
            live = np.flatnonzero(active)
            if live.size == 0:
                break
            corr = np.abs(atoms.T @ R[:, live])
            if k:
                prev = idx[live, :k]
                corr[prev.T, np.arange(live.size)[None, :]] = -1.0
            j = np.argmax(corr, axis=0)
            idx[live, k] = j
            count[live] = k + 1
            sel = idx[live, :k + 1]
            G = gram[sel[:, :, None], sel[:, None, :]]
            rhs = corr0[sel, live[:, None]]
            # dependent atoms make G singular; lstsq-free fallback via small ridge
            try:
                a = np.linalg.solve(G, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                a = np.linalg.solve(G + 1e-12 * np.eye(k + 1), rhs[..., None])[..., 0]
            coef[live, :k + 1] = a
            approx = np.einsum("mck,ck->mc", atoms[:, sel], a)
            R[:, live] = Xc[:, live] - approx
            rn = np.linalg.norm(R[:, live], axis=0)
            done = rn <= tol * norms[live]
            active[live[done]] = False
        used = np.arange(T)[None, :] < count[:, None]
        col_index = np.broadcast_to((start + np.arange(c))[:, None], (c, T))
        out[idx[used], col_index[used]] = coef[used]
    return out


def codes_from_matrix(coefs, X=None, D: Optional[Dictionary] = None) -> list[SparseCode]:
    """Convert a dense coefficient matrix into per-column SparseCodes."""
    coefs = np.asarray(coefs)
    codes = []
    for i in range(coefs.shape[1]):
        nz = np.flatnonzero(coefs[:, i])
        vals = coefs[nz, i]
        p = 1.0
        if X is not None and D is not None:
            p = prd(X[:, i], D.atoms[:, nz] @ vals) if nz.size else 1.0
        codes.append(SparseCode(nz, vals, p))
    return codes


def stack_beats(beats: Sequence) -> np.ndarray:
    """Matrix view with one beat per column."""
    return np.column_stack([_samples(b) for b in beats])
