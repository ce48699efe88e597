"""K-SVD training of class-specific overcomplete dictionaries."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DataError, UsageError
from .sparse_core import Dictionary, omp_batch, stack_beats

log = logging.getLogger(__name__)

DEDUP_THRESHOLD = 0.999


@dataclass(frozen=True)
class KsvdConfig:
    n_atoms: int = 600
    sparsity: int = 10
    iterations: int = 50
    seed: int = 0
    convergence_tol: float = 0.0

    def __post_init__(self):
        if self.sparsity < 1:
            raise UsageError("sparsity T0 must be >= 1")
        if self.n_atoms < 1 or self.iterations < 0:
            raise UsageError("n_atoms must be positive and iterations nonnegative")


@dataclass
class KsvdResult:
    dictionary: Dictionary
    coefs: np.ndarray
    # (objective before atom-update stage, objective after it) per iteration
    history: list = field(default_factory=list)
    replaced_atoms: int = 0

    @property
    def objective(self) -> float:
        return self.history[-1][1] if self.history else float("nan")


def objective(D, X, codes) -> float:
    """Squared Frobenius norm of ``X - D @ Psi``.

    ``codes`` is either a dense (n, M) coefficient matrix or a sequence of
    SparseCode objects, one per column of ``X``.
    """
    atoms = D.atoms if isinstance(D, Dictionary) else np.asarray(D, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if isinstance(codes, np.ndarray):
        if codes.shape != (atoms.shape[1], X.shape[1]):
            raise UsageError(f"coefficient shape {codes.shape} inconsistent with D and X")
        return float(np.sum((X - atoms @ codes) ** 2))
    if len(codes) != X.shape[1] or X.shape[0] != atoms.shape[0]:
        raise UsageError("one code per column of X is required")
    total = 0.0
    for i, code in enumerate(codes):
        approx = atoms[:, code.support] @ code.values if code.nnz else 0.0
        total += float(np.sum((X[:, i] - approx) ** 2))
    return total


def _initial_atoms(X, n_atoms, rng):
    m, M = X.shape
    norms = np.linalg.norm(X, axis=0)
    chosen = []
    seen = set()
    for i in range(M):
        if len(chosen) == n_atoms:
            break
        if norms[i] == 0:
            continue
        key = (X[:, i] / norms[i]).tobytes()
        if key in seen:
            continue
        seen.add(key)
        chosen.append(X[:, i] / norms[i])
    atoms = np.zeros((m, n_atoms))
    if chosen:
        atoms[:, :len(chosen)] = np.column_stack(chosen)
    missing = n_atoms - len(chosen)
    if missing:
        filler = rng.standard_normal((m, missing))
        atoms[:, len(chosen):] = filler / np.linalg.norm(filler, axis=0)
    return atoms


def _worst_signal(E, X, taken):
    err = np.sum(E ** 2, axis=0)
    if taken:
        err[list(taken)] = -1.0
    i = int(np.argmax(err))
    taken.add(i)
    v = E[:, i] if np.linalg.norm(E[:, i]) > 0 else X[:, i]
    return v / np.linalg.norm(v)


def fit_ksvd(X, cfg: KsvdConfig, class_tag=None) -> KsvdResult:
    """Run K-SVD on the columns of ``X`` and return the full training trace.

    Each iteration alternates fixed-sparsity OMP over all columns with a
    sequential sweep of rank-1 SVD atom updates. Unused atoms are replaced
    by the worst-represented training signal, and near-duplicate atoms are
    re-seeded the same way before the next coding stage.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise UsageError("training set is empty")
    m, M = X.shape
    if cfg.n_atoms < m:
        raise UsageError(f"n_atoms ({cfg.n_atoms}) must be >= signal dimension ({m})")
    if M < cfg.n_atoms:
        warnings.warn(
            f"only {M} training signals for {cfg.n_atoms} atoms; padding with random atoms",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(cfg.seed)
    atoms = _initial_atoms(X, cfg.n_atoms, rng)
    history = []
    replaced = 0
    coefs = np.zeros((cfg.n_atoms, M))
    prev_obj = None
    for it in range(cfg.iterations):
        if it:
            replaced += _dedup(atoms, X, coefs)
        D = Dictionary(atoms, class_tag, check_overcomplete=False)
        coefs = omp_batch(D, X, cfg.sparsity)
        E = X - atoms @ coefs
        before = float(np.sum(E ** 2))
        taken = set()
        for k in range(cfg.n_atoms):
            users = np.flatnonzero(coefs[k])
            if users.size == 0:
                atoms[:, k] = _worst_signal(E, X, taken)
                replaced += 1
                continue
            Ek = E[:, users] + np.outer(atoms[:, k], coefs[k, users])
            U, s, Vt = np.linalg.svd(Ek, full_matrices=False)
            u = U[:, 0]
            v = s[0] * Vt[0]
            atoms[:, k] = u
            coefs[k, users] = v
            E[:, users] = Ek - np.outer(u, v)
        after = float(np.sum(E ** 2))
        history.append((before, after))
        log.debug("ksvd iteration %d: objective %.6g -> %.6g", it, before, after)
        if cfg.convergence_tol > 0 and prev_obj is not None and prev_obj > 0:
            if abs(prev_obj - after) / prev_obj < cfg.convergence_tol:
                break
        prev_obj = after
    atoms /= np.linalg.norm(atoms, axis=0)
    meta = {"seed": cfg.seed, "T0": cfg.sparsity, "iterations": cfg.iterations}
    D = Dictionary(atoms, class_tag, meta)
    return KsvdResult(D, coefs, history, replaced)


def _dedup(atoms, X, coefs):
    G = np.abs(atoms.T @ atoms)
    np.fill_diagonal(G, 0.0)
    E = X - atoms @ coefs
    taken = set()
    count = 0
    for k in range(atoms.shape[1]):
        if G[k, :k].size and G[k, :k].max() > DEDUP_THRESHOLD:
            atoms[:, k] = _worst_signal(E, X, taken)
            G[k, :] = G[:, k] = 0.0
            count += 1
    return count


def train_dictionary(beats, cfg: Optional[KsvdConfig] = None, class_tag=None) -> Dictionary:
    """Train a dictionary from a list of beats (or an m x M matrix)."""
    cfg = cfg or KsvdConfig()
    if isinstance(beats, np.ndarray):
        X = beats
    else:
        beats = list(beats)
        if not beats:
            raise UsageError("training set is empty")
        tags = {b.label for b in beats if getattr(b, "label", None) is not None}
        if class_tag is None and len(tags) == 1:
            class_tag = tags.pop()
        elif len(tags) > 1:
            raise UsageError(f"training beats mix classes {sorted(t.value for t in tags)}")
        X = stack_beats(beats)
    return fit_ksvd(X, cfg, class_tag).dictionary


# --- file format ----------------------------------------------------------

_MAGIC = "# pvcdict dictionary v1"


def save_dictionary(D: Dictionary, path) -> None:
    """Text header followed by a row-major CSV payload of the atoms."""
    path = Path(path)
    header = [
        _MAGIC,
        f"# m={D.m}",
        f"# n={D.n}",
        f"# class_tag={D.class_tag.value if D.class_tag else ''}",
    ]
    for key in ("seed", "T0", "iterations"):
        header.append(f"# {key}={D.meta.get(key, '')}")
    with path.open("w") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, D.atoms, delimiter=",", fmt="%.17g")


def load_dictionary(path) -> Dictionary:
    path = Path(path)
    meta = {}
    with path.open() as fh:
        first = fh.readline().rstrip("\n")
        if first != _MAGIC:
            raise DataError(f"{path}: not a dictionary file")
        while True:
            pos = fh.tell()
            line = fh.readline()
            if not line.startswith("#"):
                fh.seek(pos)
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        atoms = np.loadtxt(fh, delimiter=",", ndmin=2)
    try:
        m, n = int(meta["m"]), int(meta["n"])
    except (KeyError, ValueError):
        raise DataError(f"{path}: header lacks m/n") from None
    if atoms.shape != (m, n):
        raise DataError(f"{path}: payload shape {atoms.shape} != header {(m, n)}")
    extra = {}
    for key in ("seed", "T0", "iterations"):
        if meta.get(key):
            extra[key] = int(meta[key])
    tag = meta.get("class_tag") or None
    try:
        return Dictionary(atoms, tag, extra, check_overcomplete=False)
    except UsageError as exc:
        raise DataError(f"{path}: {exc}") from None


