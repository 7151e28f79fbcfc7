import numpy as np
import pytest
from hypothesis import given, strategies as st

from spikelda.dataio import LabeledDataset
from spikelda.errors import DegenerateError, DomainError, InsufficientDataError, ValidationError
from spikelda.simulate import equicorrelation
from spikelda.whitening import (
    SpikedCovModel,
    choose_d,
    choose_d_for,
    fit_spiked,
    inverse_sqrt,
    pooled_covariance,
    whiten,
    whitening_exact,
)


def test_pooled_hand_example():
    ds = LabeledDataset.from_classes(np.array([[0.0, 0], [2, 0]]), np.array([[0.0, 0], [0, 2]]))
    stats = pooled_covariance(ds)
    np.testing.assert_allclose(stats.class_means, [[1, 0], [0, 1]])
    np.testing.assert_allclose(stats.sigma_hat, np.diag([0.5, 0.5]))
    assert stats.trace == pytest.approx(1.0)


def test_pooled_repeated_points_is_zero():
    ds = LabeledDataset.from_classes(np.ones((2, 3)), np.zeros((2, 3)))
    np.testing.assert_array_equal(pooled_covariance(ds).sigma_hat, np.zeros((3, 3)))


def test_pooled_needs_two_per_class():
    ds = LabeledDataset.from_classes(np.ones((1, 3)), np.zeros((2, 3)))
    with pytest.raises(InsufficientDataError):
        pooled_covariance(ds)


def test_pooled_example1_statistics(rng):
    F = np.linalg.cholesky(equicorrelation(2, 0.9))
    X1 = rng.standard_normal((500, 2)) @ F.T
    X2 = rng.standard_normal((500, 2)) @ F.T + [1.0, 0.0]
    S = pooled_covariance(LabeledDataset.from_classes(X1, X2)).sigma_hat
    assert np.max(np.abs(S - equicorrelation(2, 0.9))) < 0.1


def test_fit_spiked_exact_examples():
    m = fit_spiked(np.diag([10.0, 1, 1, 1]), 1)
    np.testing.assert_allclose(m.lambda_hat, [10.0])
    assert m.sigma2_hat == pytest.approx(1.0)
    m = fit_spiked(np.eye(5), 1)
    assert m.sigma2_hat == pytest.approx(1.0)


def test_fit_spiked_model1_population():
    m = fit_spiked(equicorrelation(800, 0.5), 1)
    assert m.lambda_hat[0] == pytest.approx(400.5, rel=1e-10)
    assert m.sigma2_hat == pytest.approx(0.5, rel=1e-10)


def test_fit_spiked_errors():
    with pytest.raises(ValidationError):
        fit_spiked(np.eye(3), 3)
    with pytest.raises(DegenerateError):
        fit_spiked(np.diag([2.0, 1.0, 0.0, 0.0]), 2)


def test_fit_spiked_recovers_exact_spikes(rng):
    p, d = 60, 3
    U, _ = np.linalg.qr(rng.standard_normal((p, d)))
    lam = np.array([50.0, 20.0, 5.0])
    Sigma = (U * lam) @ U.T + 2.0 * np.eye(p)
    m = fit_spiked(0.5 * (Sigma + Sigma.T), d)
    # the top eigenvalues of the matrix are lambda + sigma^2
    np.testing.assert_allclose(m.lambda_hat, lam + 2.0, atol=1e-8)
    assert m.sigma2_hat == pytest.approx((np.trace(Sigma) - m.lambda_hat.sum()) / (p - d), rel=1e-12)
    np.testing.assert_allclose(m.U_hat.T @ m.U_hat, np.eye(d), atol=1e-10)


def test_gram_and_dense_fits_agree(rng):
    X1 = rng.standard_normal((20, 200))
    X2 = rng.standard_normal((20, 200)) + 0.3
    stats = pooled_covariance(LabeledDataset.from_classes(X1, X2))
    gram = fit_spiked(stats, 4)
    dense = fit_spiked(stats.sigma_hat, 4)
    np.testing.assert_allclose(gram.lambda_hat, dense.lambda_hat, rtol=1e-10)
    np.testing.assert_allclose(gram.U_hat, dense.U_hat, atol=1e-8)
    assert gram.sigma2_hat == pytest.approx(dense.sigma2_hat, rel=1e-10)


def test_choose_d_examples():
    assert choose_d([9, 0.5, 0.5], 0.9) == 1
    assert choose_d([1, 1, 1, 1], 0.9) == 4
    assert choose_d([1, 1, 1, 1], 0.9, cap=2) == 2
    with pytest.raises(ValidationError):
        choose_d([0, 0], 0.9)
    with pytest.raises(ValidationError):
        choose_d([1, 2], 0.9)
    with pytest.raises(ValidationError):
        choose_d([1, 1], 1.0)


def test_choose_d_planted_factors(rng):
    # ten equal planted factors over a small ridge: top nine hold 86.6%, top ten 96.3%
    Q, _ = np.linalg.qr(rng.standard_normal((400, 10)))
    Sigma = 10.0 * Q @ Q.T + 0.01 * np.eye(400)
    assert choose_d(np.linalg.eigvalsh(Sigma)[::-1], 0.9) == 10


def test_choose_d_for_stays_below_rank(rng):
    X1 = rng.standard_normal((6, 50))
    X2 = rng.standard_normal((6, 50))
    stats = pooled_covariance(LabeledDataset.from_classes(X1, X2))
    d = choose_d_for(stats, 0.99)
    assert 1 <= d <= 12 - 2 - 1
    fit_spiked(stats, d)


def test_whiten_examples():
    U = np.eye(3)[:, :1]
    W = SpikedCovModel(U, np.array([3.0]), 1.0).whitener()
    v = np.array([2.0, 0, 0])
    np.testing.assert_allclose(whiten(W, v), v / 2)
    np.testing.assert_allclose(whiten(W, np.array([0, 2.0, 0])), [0, 2.0, 0])
    with pytest.raises(ValidationError):
        W.apply(np.ones(4))


def test_whiten_identity_input():
    # a spiked fit of the identity keeps lambda_hat = 1 as a spike, so W shrinks span(U) by 1/sqrt(2)
    m = fit_spiked(np.eye(4), 1)
    W = m.whitener()
    u = m.U_hat[:, 0]
    np.testing.assert_allclose(W.apply(u), u / np.sqrt(2), atol=1e-14)
    orth = np.eye(4)[:, 0] - u * u[0]
    np.testing.assert_allclose(W.apply(orth), orth, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_whiten_matches_dense(seed):
    r = np.random.default_rng(seed)
    p, d = 30, 3
    U, _ = np.linalg.qr(r.standard_normal((p, d)))
    lam = np.sort(r.uniform(1, 20, d))[::-1]
    s2 = float(r.uniform(0.1, 3))
    model = SpikedCovModel(U, lam, s2)
    dense = (U * (lam + s2) ** -0.5) @ U.T + (np.eye(p) - U @ U.T) / np.sqrt(s2)
    v = r.standard_normal(p)
    np.testing.assert_allclose(model.whitener().apply(v), dense @ v, atol=1e-10)
    # operator is the exact inverse root of the reconstructed covariance
    rebuilt = (U * (lam + s2)) @ U.T + s2 * (np.eye(p) - U @ U.T)
    np.testing.assert_allclose(model.whitener().matrix(), inverse_sqrt(0.5 * (rebuilt + rebuilt.T)), atol=1e-9)
    eta = model.whitener().eta_hat
    assert np.all(np.diff(eta) >= 0) and np.all(eta <= model.whitener().inv_sigma_hat)


def test_whitening_exact_examples():
    np.testing.assert_allclose(whitening_exact(np.diag([4.0, 9.0])).matrix(), np.diag([0.5, 1 / 3]))
    np.testing.assert_allclose(whitening_exact(np.eye(3)).matrix(), np.eye(3))
    S = equicorrelation(2, 0.9)
    W = whitening_exact(S).matrix()
    np.testing.assert_allclose(W @ S @ W, np.eye(2), atol=1e-10)
    # mpmath: ((1.9)^-1/2 +- (0.1)^-1/2) / 2
    np.testing.assert_allclose(W @ [1.0, 0.0], [1.94387695513919550, -1.21840070502918383], rtol=1e-12)
    with pytest.raises(DomainError):
        whitening_exact(np.diag([1.0, -1.0]))


def test_spiked_model_validation():
    with pytest.raises(ValidationError):
        SpikedCovModel(np.eye(3)[:, :2], np.array([1.0, 2.0]), 1.0)
    with pytest.raises(ValidationError):
        SpikedCovModel(np.eye(3)[:, :1], np.array([1.0]), 0.0)
