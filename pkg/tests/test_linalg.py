import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spikelda import linalg
from spikelda.errors import DegenerateError, DomainError, ValidationError


def random_orthonormal(rng, p, d):
    q, _ = np.linalg.qr(rng.standard_normal((p, d)))
    return q


def test_sym_eigendecomp_diagonal():
    pairs = linalg.sym_eigendecomp(np.diag([1.0, 5.0, 3.0]), 2)
    np.testing.assert_allclose(pairs.values, [5.0, 3.0])
    np.testing.assert_allclose(np.abs(pairs.vectors), [[0, 0], [1, 0], [0, 1]], atol=1e-14)


def test_sym_eigendecomp_signs_follow_convention(rng):
    A = rng.standard_normal((30, 30))
    pairs = linalg.sym_eigendecomp(A @ A.T, 4)
    V = pairs.vectors
    pivots = np.argmax(np.abs(V), axis=0)
    assert np.all(V[pivots, np.arange(4)] > 0)


def test_sign_tie_goes_to_lowest_index():
    v = np.array([[-1.0], [1.0]]) / np.sqrt(2)
    out = linalg.fix_signs(v)
    assert out[0, 0] > 0


def test_sym_eigendecomp_rejects_bad_input():
    with pytest.raises(ValidationError):
        linalg.sym_eigendecomp(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)
    with pytest.raises(ValidationError):
        linalg.sym_eigendecomp(np.eye(3), 4)
    with pytest.raises(ValidationError):
        linalg.sym_eigendecomp(np.eye(3), 0)
    with pytest.raises(ValidationError):
        linalg.sym_eigendecomp(np.array([[np.nan]]), 1)


def test_gram_path_matches_dense(rng):
    Xc = rng.standard_normal((40, 300))
    Xc -= Xc.mean(axis=0)
    dense = linalg.sym_eigendecomp(Xc.T @ Xc / 40, 5)
    gram = linalg.top_eigenpairs_gram(Xc, 5)
    np.testing.assert_allclose(gram.values, dense.values, rtol=1e-10)
    np.testing.assert_allclose(gram.vectors, dense.vectors, atol=1e-8)


def test_gram_path_completes_null_directions():
    Xc = np.zeros((3, 10))
    Xc[0, 0], Xc[1, 0] = 1.0, -1.0
    pairs = linalg.top_eigenpairs_gram(Xc, 3)
    np.testing.assert_allclose(pairs.vectors.T @ pairs.vectors, np.eye(3), atol=1e-12)
    assert pairs.values[1] == pytest.approx(0.0, abs=1e-12)


def test_gram_spectrum_shares_nonzero_eigenvalues(rng):
    X = rng.standard_normal((12, 7))
    small = linalg.gram_spectrum(X)
    full = np.linalg.eigvalsh(X.T @ X / 12)[::-1]
    np.testing.assert_allclose(small, full, atol=1e-12)


def test_two_to_inf_norm_is_max_row_norm():
    M = np.array([[3.0, 4.0], [1.0, 0.0]])
    assert linalg.two_to_inf_norm(M) == 5.0
    assert linalg.two_to_inf_norm(np.zeros((0, 2))) == 0.0


def test_procrustes_recovers_rotation(rng):
    U = random_orthonormal(rng, 20, 3)
    R = random_orthonormal(rng, 3, 3)
    Uhat = U @ R
    Xi = linalg.procrustes_align(Uhat, U)
    np.testing.assert_allclose(U @ Xi, Uhat, atol=1e-12)
    np.testing.assert_allclose(Uhat @ Xi.T, U, atol=1e-12)


def test_procrustes_identity_and_sign():
    U = np.eye(4)[:, :1]
    np.testing.assert_array_equal(linalg.procrustes_align(-U, U), [[-1.0]])
    np.testing.assert_allclose(linalg.procrustes_align(np.eye(4)[:, :2], np.eye(4)[:, :2]), np.eye(2))


def test_procrustes_degenerate():
    U = np.eye(4)[:, :2]
    Uhat = np.eye(4)[:, [0, 2]]
    with pytest.raises(DegenerateError):
        linalg.procrustes_align(Uhat, U)


def test_sin_theta(rng):
    U = np.eye(3)[:, :1]
    th = 0.3
    Uhat = np.array([[np.cos(th)], [np.sin(th)], [0.0]])
    assert linalg.sin_theta_dist(Uhat, U) == pytest.approx(np.sin(th), abs=1e-14)
    V = random_orthonormal(rng, 10, 2)
    assert linalg.sin_theta_dist(V, V) == pytest.approx(0.0, abs=1e-7)


def test_effective_rank():
    assert linalg.effective_rank(np.eye(5)) == pytest.approx(5.0)
    assert linalg.effective_rank(np.diag([10.0, 0.0, 0.0])) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        linalg.effective_rank(np.zeros((3, 3)))


@given(arrays(np.float64, (6, 4), elements=st.floats(-10, 10)), st.integers(1, 4))
def test_eigenpairs_are_orthonormal_and_sorted(X, k):
    A = X.T @ X
    pairs = linalg.sym_eigendecomp(A, k)
    assert np.all(np.diff(pairs.values) <= 1e-9 * max(1.0, abs(pairs.values[0])))
    np.testing.assert_allclose(pairs.vectors.T @ pairs.vectors, np.eye(k), atol=1e-8)
    np.testing.assert_allclose(A @ pairs.vectors, pairs.vectors * pairs.values, atol=1e-7 * max(1.0, np.abs(A).max()))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 3))
def test_procrustes_is_orthogonal(seed, p_extra, d):
    r = np.random.default_rng(seed)
    p = d + p_extra
    U = random_orthonormal(r, p, d)
    Uhat = random_orthonormal(r, p, d)
    try:
        Xi = linalg.procrustes_align(Uhat, U)
    except DegenerateError:
        return
    np.testing.assert_allclose(Xi.T @ Xi, np.eye(d), atol=1e-10)
    # aligned Frobenius error never exceeds the unaligned one
    assert np.linalg.norm(Uhat @ Xi.T - U) <= np.linalg.norm(Uhat - U) + 1e-10
