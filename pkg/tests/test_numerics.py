import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtrack import (
    NonFinite,
    NonPSD,
    NonSymmetric,
    check_psd,
    check_symmetric,
    pseudo_inverse,
    spectral_apply,
    spectral_norm,
    sym_eigendecompose,
)
from graphtrack.numerics import canonical_signs, default_rank_rtol, symmetrize


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


# -- eigendecomposition -------------------------------------------------------

@given(n=st.integers(2, 40), seed=st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_eigendecompose_round_trip(n, seed):
    m = random_symmetric(n, seed)
    pair = sym_eigendecompose(m)
    rebuilt = pair.vectors @ np.diag(pair.values) @ pair.vectors.T
    assert np.linalg.norm(rebuilt - m) <= 1e-9 * max(np.linalg.norm(m), 1e-30)
    assert np.all(np.diff(pair.values) >= -1e-12)
    assert np.linalg.norm(pair.vectors.T @ pair.vectors - np.eye(n)) <= 1e-10


def test_eigendecompose_round_trip_large():
    m = random_symmetric(200, 7)
    pair = sym_eigendecompose(m)
    rebuilt = pair.vectors @ np.diag(pair.values) @ pair.vectors.T
    assert np.linalg.norm(rebuilt - m) <= 1e-9 * np.linalg.norm(m)


def test_eigendecompose_bit_stable():
    m = random_symmetric(17, 3)
    a = sym_eigendecompose(m)
    b = sym_eigendecompose(m.copy())
    assert a.values.tobytes() == b.values.tobytes()
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_sign_canon_first_significant_entry_positive():
    pair = sym_eigendecompose(random_symmetric(12, 9))
    for col in pair.vectors.T:
        lead = col[np.abs(col) > 1e-12][0]
        assert lead > 0


def test_canonical_signs_flips_only_sign():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((5, 5))
    out = canonical_signs(v)
    assert np.allclose(np.abs(out), np.abs(v))


def test_non_symmetric_rejected():
    with pytest.raises(NonSymmetric):
        sym_eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_non_finite_rejected():
    with pytest.raises(NonFinite):
        check_symmetric(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_non_square_rejected():
    with pytest.raises(Exception):
        sym_eigendecompose(np.zeros((2, 3)))


# -- pseudo inverse -----------------------------------------------------------

@given(
    rows=st.integers(1, 100),
    cols=st.integers(1, 100),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=30, deadline=None)
def test_penrose_identities(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rows, cols))
    p = pseudo_inverse(a)
    scale = max(1.0, np.linalg.norm(a))
    assert np.linalg.norm(a @ p @ a - a) <= 1e-8 * scale
    assert np.linalg.norm(p @ a @ p - p) <= 1e-8 * max(1.0, np.linalg.norm(p))
    assert np.linalg.norm((a @ p).T - a @ p) <= 1e-8 * scale
    assert np.linalg.norm((p @ a).T - p @ a) <= 1e-8 * scale


def test_pseudo_inverse_rank_deficient():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    p = pseudo_inverse(a)
    assert np.allclose(a @ p @ a, a)
    assert np.allclose(p, 0.25 * a)


def test_default_rank_rtol():
    assert default_rank_rtol((50, 3)) == 50 * np.finfo(float).eps


# -- spectral apply -----------------------------------------------------------

def test_spectral_apply_matches_direct_eigh():
    m = random_symmetric(9, 4)
    vals, vecs = np.linalg.eigh(m)
    want = vecs @ np.diag(np.exp(vals)) @ vecs.T
    got = spectral_apply(m, np.exp)
    assert np.linalg.norm(got - want) <= 1e-9 * np.linalg.norm(want)


def test_spectral_apply_commutes():
    m = random_symmetric(8, 5)
    f = lambda lam: np.exp(-0.3 * lam)
    g = lambda lam: 1.0 + 0.1 * lam**2
    left = spectral_apply(m, f) @ spectral_apply(m, g)
    right = spectral_apply(m, lambda lam: f(lam) * g(lam))
    assert np.linalg.norm(left - right) <= 1e-8 * max(1.0, np.linalg.norm(right))


def test_spectral_apply_non_finite_function():
    m = random_symmetric(4, 6)
    with pytest.raises(NonFinite):
        spectral_apply(m, lambda lam: lam * np.nan)


# -- norms and psd ------------------------------------------------------------

def test_spectral_norm_oracle():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((7, 4))
    assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0])
    assert spectral_norm(np.zeros((0, 3))) == 0.0
    assert spectral_norm(np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_check_psd_accepts_and_rejects():
    assert check_psd(np.eye(3)) is not None
    with pytest.raises(NonPSD):
        check_psd(np.diag([1.0, -1.0]))
    # tiny negative eigenvalues from round-off pass
    m = random_symmetric(6, 2)
    p = m @ m.T
    check_psd(p)


def test_symmetrize():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    s = symmetrize(a)
    assert np.allclose(s, s.T)
    assert np.allclose(s, [[1.0, 1.0], [1.0, 1.0]])
