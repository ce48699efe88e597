import warnings

import numpy as np
import pytest

from pvcdict.evaluate import PipelineConfig, corpus_from_records, train_models
from pvcdict.ksvd import KsvdConfig
from pvcdict.sparse_core import BeatVector, Dictionary
from pvcdict.synth import synth_corpus


def random_dictionary(m, n, seed=0, tag=None):
    rng = np.random.default_rng(seed)
    return Dictionary.from_unnormalized(rng.standard_normal((m, n)), tag)


def orthonormal_dictionary(m, extra=0, seed=0):
    """Orthonormal basis in the first m columns, optional random atoms after it."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    if extra:
        r = rng.standard_normal((m, extra))
        q = np.hstack([q, r / np.linalg.norm(r, axis=0)])
    return Dictionary(q)


@pytest.fixture(scope="session")
def small_corpus():
    """Six short synthetic patients, about 180 beats each."""
    recs = synth_corpus(6, 0.15, seed=21, duration_s=150)
    return corpus_from_records((r.record, r.annotations) for r in recs)


TINY_CFG = PipelineConfig(
    ksvd=KsvdConfig(n_atoms=301, sparsity=6, iterations=3),
    max_train_beats=300,
    patient_minutes=1.0,
    target_se=0.95,
)


@pytest.fixture(scope="session")
def trained(small_corpus):
    """Models fitted on the first four synthetic records."""
    beats = [b for rid in sorted(small_corpus)[:4] for b in small_corpus[rid].beats]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return train_models(beats, TINY_CFG, seed=0)


def beat(samples, ts=0, label=None, rid="r"):
    return BeatVector(np.asarray(samples, dtype=float), ts, label, rid)
