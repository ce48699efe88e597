import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pvcdict.exceptions import DomainError, UsageError
from pvcdict.sparse_core import (BeatVector, Dictionary, FidelityTarget, Label, SparseCode,
                                 omp_batch, omp_solve, prd, reconstruct)

from conftest import orthonormal_dictionary, random_dictionary


# --- prd ------------------------------------------------------------------

def test_prd_identity_is_zero():
    x = np.array([1.0, -2.0, 3.0])
    assert prd(x, x) == 0.0


def test_prd_zero_estimate_is_one():
    assert prd(np.array([1.0, 2.0]), np.zeros(2)) == 1.0


def test_prd_hand_computed():
    assert prd(np.array([3.0, 4.0]), np.array([0.0, 4.0])) == pytest.approx(0.6)


def test_prd_errors():
    with pytest.raises(DomainError):
        prd(np.zeros(3), np.ones(3))
    with pytest.raises(UsageError):
        prd(np.ones(3), np.ones(4))


# --- types ----------------------------------------------------------------

def test_beat_rejects_zero_norm():
    with pytest.raises(DomainError):
        BeatVector(np.zeros(301), 0)


def test_beat_samples_read_only():
    b = BeatVector(np.ones(5), 3, "V")
    assert b.label is Label.PVC
    with pytest.raises(ValueError):
        b.samples[0] = 2.0


@pytest.mark.parametrize("text,lab", [("N", Label.NORMAL), ("pvc", Label.PVC), ("1", Label.PVC),
                                      ("normal", Label.NORMAL), ("O", Label.OTHER)])
def test_label_parse(text, lab):
    assert Label.parse(text) is lab


def test_label_parse_unknown():
    with pytest.raises(UsageError):
        Label.parse("Q")


@pytest.mark.parametrize("v", [0.0, 1.0, -0.1, 1.5])
def test_fidelity_target_bounds(v):
    with pytest.raises(UsageError):
        FidelityTarget(v)


def test_dictionary_unit_norm_check():
    with pytest.raises(UsageError):
        Dictionary(np.full((2, 3), 1.0))
    D = Dictionary.from_unnormalized(np.arange(1.0, 7.0).reshape(2, 3))
    assert np.allclose(np.linalg.norm(D.atoms, axis=0), 1.0)


def test_dictionary_must_be_overcomplete():
    with pytest.raises(UsageError):
        Dictionary(np.eye(4)[:, :3])


def test_sparse_code_rejects_duplicates():
    with pytest.raises(UsageError):
        SparseCode([1, 1], [0.5, 0.5], 0.0)


def test_ranked_orders_by_magnitude_stably():
    c = SparseCode([4, 2, 9, 7], [1.0, -3.0, 1.0, 2.0], 0.0)
    locs, vals = c.ranked()
    assert locs.tolist() == [2, 7, 4, 9]
    assert vals.tolist() == [-3.0, 2.0, 1.0, 1.0]


# --- reconstruct ----------------------------------------------------------

def test_reconstruct_empty_is_zero():
    D = random_dictionary(8, 12)
    assert np.array_equal(reconstruct(D, SparseCode([], [], 1.0)), np.zeros(8))


def test_reconstruct_single_atom_is_column():
    D = random_dictionary(8, 12)
    assert np.array_equal(reconstruct(D, SparseCode([5], [1.0], 0.0)), D.atoms[:, 5])


def test_reconstruct_out_of_range():
    D = random_dictionary(8, 12)
    with pytest.raises(UsageError):
        reconstruct(D, SparseCode([12], [1.0], 0.0))


# --- omp ------------------------------------------------------------------

def test_omp_single_atom_signal():
    D = orthonormal_dictionary(30, extra=20)
    code = omp_solve(D, 2.5 * D.atoms[:, 7], 0.01)
    assert code.support.tolist() == [7]
    assert code.values[0] == pytest.approx(2.5)
    assert code.achieved_prd == pytest.approx(0.0, abs=1e-12)
    assert code.target_met


def test_omp_exact_three_sparse_recovery():
    D = orthonormal_dictionary(40, seed=3)
    rng = np.random.default_rng(1)
    supp = rng.choice(40, 3, replace=False)
    vals = rng.uniform(1, 2, 3) * rng.choice([-1, 1], 3)
    x = D.atoms[:, supp] @ vals
    code = omp_solve(D, x, 1e-9)
    assert sorted(code.support.tolist()) == sorted(supp.tolist())
    assert code.nnz == 3


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_omp_near_one_target_takes_at_most_one_atom(seed):
    D = random_dictionary(20, 40, seed=seed % 1000)
    x = np.random.default_rng(seed).standard_normal(20)
    code = omp_solve(D, x, 0.999)
    assert code.nnz <= 1
    assert code.achieved_prd == pytest.approx(prd(x, reconstruct(D, code)), abs=1e-9)


@given(seed=st.integers(0, 10_000), target=st.floats(0.02, 0.9))
@settings(max_examples=40, deadline=None)
def test_omp_code_invariants(seed, target):
    D = random_dictionary(24, 48, seed=seed)
    x = np.random.default_rng(seed + 1).standard_normal(24)
    code = omp_solve(D, x, target)
    assert len(set(code.support.tolist())) == code.nnz
    assert code.nnz <= D.m
    assert np.all(code.support < D.n)
    achieved = prd(x, reconstruct(D, code))
    assert code.achieved_prd == pytest.approx(achieved, abs=1e-9)
    if code.target_met:
        assert achieved <= target + 1e-12


def test_omp_max_atoms_cap():
    D = random_dictionary(20, 40)
    x = np.random.default_rng(0).standard_normal(20)
    code = omp_solve(D, x, 0.01, max_atoms=2)
    assert code.nnz == 2 and not code.target_met


def test_omp_stalls_instead_of_looping():
    # rank-deficient dictionary: only two directions available
    atoms = np.zeros((5, 5))
    atoms[0, :3] = 1.0
    atoms[1, 3:] = 1.0
    D = Dictionary(atoms)
    code = omp_solve(D, np.ones(5), 0.05)
    assert not code.target_met
    assert code.nnz <= 2


def test_omp_tie_goes_to_lowest_index():
    D = Dictionary(np.eye(3))
    code = omp_solve(D, np.array([1.0, 1.0, 0.0]), 0.9)
    assert code.support.tolist() == [0]


def test_omp_errors():
    D = random_dictionary(6, 8)
    with pytest.raises(UsageError):
        omp_solve(D, np.ones(5), 0.1)
    with pytest.raises(DomainError):
        omp_solve(D, np.zeros(6), 0.1)


@given(arrays(np.float64, 12, elements=st.floats(-5, 5)).filter(lambda a: np.linalg.norm(a) > 1e-3),
       st.floats(0.1, 1e3))
@settings(max_examples=40, deadline=None)
def test_omp_scale_invariant_support(x, scale):
    D = random_dictionary(12, 24, seed=4)
    a, b = omp_solve(D, x, 0.2), omp_solve(D, scale * x, 0.2)
    assert a.support.tolist() == b.support.tolist()


def test_omp_batch_matches_fixed_sparsity_omp():
    D = random_dictionary(16, 32, seed=2)
    X = np.random.default_rng(5).standard_normal((16, 10))
    C = omp_batch(D, X, 3)
    assert C.shape == (32, 10)
    for i in range(10):
        single = omp_solve(D, X[:, i], 1e-6, max_atoms=3)
        nz = np.flatnonzero(C[:, i])
        assert sorted(nz.tolist()) == sorted(single.support.tolist())
        assert np.allclose(D.atoms @ C[:, i], reconstruct(D, single), atol=1e-9)
