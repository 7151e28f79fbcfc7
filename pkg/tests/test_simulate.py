import numpy as np
import pytest
from scipy import stats

from spikelda.errors import DegenerateError, RunError, ValidationError
from spikelda.simulate import (
    BlockDiag, EqualCorr, EquicorrFactor, LowRankFactor, MethodConfig, RandomCorr, SimSpec,
    equicorrelation, gen_model1, gen_model2, gen_model3, make_rng, metrics, model3_condition_number,
    replicate_seed, run_mc, run_projection_experiment, sample_gaussian, strong_weak_counts,
)


def test_identity_sampler_covariance():
    X = sample_gaussian(np.zeros(5), np.eye(5), 100_000, make_rng(3))
    assert np.max(np.abs(np.cov(X, rowvar=False) - np.eye(5))) < 0.05


@pytest.mark.parametrize("blocks,rho", [((6,), 0.9), ((3, 4), 0.5)])
def test_equicorrelation_factor_matches_cholesky(blocks, rho):
    p = sum(blocks)
    Sigma = np.zeros((p, p))
    start = 0
    for m in blocks:
        Sigma[start : start + m, start : start + m] = equicorrelation(m, rho)
        start += m
    F = EquicorrFactor(blocks, rho)
    # the implicit root squares to Sigma exactly
    R = F.apply(np.eye(p))
    np.testing.assert_allclose(R.T @ R, Sigma, atol=1e-12)
    # and its draws match Cholesky draws along a fixed projection
    v = np.linspace(1, -1, p)
    a = sample_gaussian(np.zeros(p), F, 4000, make_rng(1)) @ v
    b = sample_gaussian(np.zeros(p), np.linalg.cholesky(Sigma), 4000, make_rng(2)) @ v
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_low_rank_factor():
    rng = make_rng(4)
    L = rng.standard_normal((7, 2))
    F = LowRankFactor(L, 0.3)
    E = np.eye(F.noise_dim)
    R = F.apply(E)
    np.testing.assert_allclose(R.T @ R, L @ L.T + 0.3 * np.eye(7), atol=1e-12)


def test_model_structures():
    pop1 = gen_model1(50, 0.5)
    np.testing.assert_allclose(pop1.whitener.matrix() @ pop1.Sigma @ pop1.whitener.matrix(), np.eye(50), atol=1e-10)
    pop2 = gen_model2(60, 0.5)
    assert pop2.support().size == 20
    np.testing.assert_allclose(pop2.whitener.matrix() @ pop2.Sigma @ pop2.whitener.matrix(), np.eye(60), atol=1e-10)
    with pytest.raises(ValidationError):
        gen_model1(10, 1.5)
    with pytest.raises(ValidationError):
        gen_model2(20, 0.5)


def test_model3():
    pop = gen_model3(40, 5, "uniform", make_rng(0))
    assert model3_condition_number(pop) == pytest.approx(pop.condition_number(), rel=1e-8)
    with pytest.raises(DegenerateError):
        gen_model3(40, 5, lambda rng, shape: np.zeros(shape), make_rng(0))
    with pytest.raises(ValidationError):
        gen_model3(40, 5, "cauchy", make_rng(0))


def test_metrics():
    err, fpr, fnr = metrics(np.array([1, 2, 2, 2]), np.array([1, 1, 2, 2]))
    assert (err, fpr, fnr) == (0.25, 0.5, 0.0)
    err, fpr, fnr = metrics(np.array([2, 1]), np.array([1, 1]))
    assert err == 1 / 2 and fpr == 1 / 2 and np.isnan(fnr)
    assert strong_weak_counts([0, 3, 11, 500]) == (2, 2)


def test_replicate_seeds_distinct():
    seeds = {replicate_seed(7, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert replicate_seed(7, 3) == replicate_seed(7, 3)


SMALL = SimSpec(EqualCorr(0.5), p=60, n_train=30, n_test=40)


def test_run_mc_is_deterministic_and_thread_independent():
    method = MethodConfig("pclda", s_candidates=(1, 2, 5, 10))
    a = run_mc(SMALL, method, 4, base_seed=11, threads=1)
    b = run_mc(SMALL, method, 4, base_seed=11, threads=3)
    assert a.rows == b.rows
    assert run_mc(SMALL, method, 1, base_seed=11).rows == a.rows[:1]


def test_every_method_runs():
    for name in ("oracle", "pclda", "nsc"):
        res = run_mc(SimSpec(BlockDiag(0.5), p=40, n_train=25, n_test=25), MethodConfig(name, nsc_grid=8, s_candidates=(2, 4)), 2)
        summary = res.summary()
        assert set(summary) == {"error_rate", "fpr", "fnr", "model_size", "strong_hits", "weak_hits", "selected_equals_true"}
    res = run_mc(SimSpec(RandomCorr(3), p=30, n_train=20, n_test=20), MethodConfig("pclda", selection="threshold"), 2)
    assert res.column("model_size").min() >= 1


def test_failures_above_ten_percent_raise():
    spec = SimSpec(RandomCorr(3, lambda rng, shape: np.zeros(shape)), p=20, n_train=10, n_test=10)
    with pytest.raises(RunError):
        run_mc(spec, MethodConfig("oracle"), 3)


def test_oracle_on_strong_correlation():
    res = run_mc(SimSpec(EqualCorr(0.9)), MethodConfig("oracle"), 20, base_seed=1)
    assert res.summary()["error_rate"]["mean"] <= 0.0005


def test_projection_experiment_small():
    out = run_projection_experiment(reps=30, base_seed=1)
    assert out["nu_zeta"][0] < out["nu"][0]
    assert out["beta"][0] <= out["nu_zeta"][0] + 0.01
