"""Monte Carlo probes of the estimator's scaling behaviour and structural claims.

The rate checks report observable decay only. Rate assertions elsewhere are
phrased as ratios between grid cells, because the constants in the
underlying bounds are not constructive.

Default population: a spiked covariance ``U diag(lambda) U' + sigma^2 I``
whose eigenvectors are delocalised cosine columns, ``lambda_k = strength_k * p``,
and a whitened mean difference with ``s0`` nonzero entries.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg
from .dataio import LabeledDataset
from .errors import EmptySelectionError, ValidationError
from .pclda import DEFAULT_ALPHA, DEFAULT_C, fit_kclass, fit_pclda, hard_threshold, rotation_basis
from .simulate import Population, make_rng, replicate_seed
from .whitening import DenseWhitener, fit_spiked, pooled_covariance

RATE_COLUMNS = ("n", "p", "metric", "mean", "q95", "ratio_to_bound")


@dataclass(frozen=True)
class SpikeSpec:
    """Spiked population used by the rate checks."""

    strengths: tuple[float, ...] = (3.0, 2.0, 1.0)
    sigma2: float = 1.0
    s0: int = 5
    signal: float = 1.0

    @property
    def d(self) -> int:
        return len(self.strengths)


@dataclass(frozen=True)
class DiagnosticsConfig:
    grid: tuple[tuple[int, int], ...] = tuple((n, p) for p in (100, 200, 400) for n in (250, 1000, 4000))
    reps: int = 50
    spike: SpikeSpec = field(default_factory=SpikeSpec)
    C: float = DEFAULT_C
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    threads: int = 1
    # ceiling asserted on sqrt(p/d) * ||U||_{2->inf}; cosine columns give <= sqrt(2)
    coherence_cap: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.reps < 10:
            raise ValidationError(f"reps must be >= 10, got {self.reps}")
        for n, p in self.grid:
            if n < 4 or p < 4:
                raise ValidationError(f"grid cells need n, p >= 4, got {(n, p)}")
            if self.spike.d >= p or self.spike.s0 > p:
                raise ValidationError(f"p = {p} is too small for the spike spec")


@dataclass(frozen=True)
class RateRow:
    n: int
    p: int
    metric: str
    mean: float
    q95: float
    ratio_to_bound: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in RATE_COLUMNS}


# -- spiked population ------------------------------------------------------------


def delocalized_basis(p: int, d: int) -> np.ndarray:
    """First d orthonormal cosine (DCT-II) columns; row norms are at most sqrt(2d/p)."""
    if not 1 <= d <= p:
        raise ValidationError(f"need 1 <= d <= p, got d={d}, p={p}")
    j = np.arange(p)[:, None] + 0.5
    k = np.arange(d)[None, :]
    U = np.cos(np.pi * j * k / p)
    U /= np.linalg.norm(U, axis=0)
    return U


def coherence_constant(U: np.ndarray) -> float:
    """C_U with ||U||_{2->inf} = C_U sqrt(d/p)."""
    p, d = U.shape
    return linalg.two_to_inf_norm(U) * math.sqrt(p / d)


class SpikedFactor:
    """Symmetric square root of ``U diag(lambda) U' + sigma^2 I`` applied in O(pd)."""

    def __init__(self, U: np.ndarray, lam: np.ndarray, sigma2: float):
        self.U = U
        self.sigma = math.sqrt(sigma2)
        self._delta = np.sqrt(lam + sigma2) - self.sigma

    @property
    def noise_dim(self) -> int:
        return self.U.shape[0]

    def apply(self, E: np.ndarray) -> np.ndarray:
        return self.sigma * E + (E @ self.U) * self._delta @ self.U.T


def spiked_population(p: int, spike: SpikeSpec = SpikeSpec()) -> tuple[Population, np.ndarray]:
    """Population with a sparse whitened direction, and its true eigenvectors."""
    U = delocalized_basis(p, spike.d)
    lam = np.asarray(spike.strengths, dtype=float) * p
    s2 = spike.sigma2
    Sigma = (U * lam) @ U.T + s2 * np.eye(p)
    Sigma = 0.5 * (Sigma + Sigma.T)
    root = SpikedFactor(U, lam, s2)
    W = (U * (1.0 / np.sqrt(lam + s2) - 1.0 / math.sqrt(s2))) @ U.T + np.eye(p) / math.sqrt(s2)
    zeta = np.zeros(p)
    zeta[: spike.s0] = spike.signal
    dmu = root.apply(zeta[None, :])[0]
    pop = Population(np.zeros(p), dmu, Sigma, root, DenseWhitener(0.5 * (W + W.T)))
    return pop, U


def _sample_half(pop: Population, n: int, rng: np.random.Generator) -> LabeledDataset:
    return pop.sample(n // 2, n - n // 2, rng)


def _map(fn: Callable[[int], object], count: int, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(count)))
    return [fn(i) for i in range(count)]


def _cell_seed(cfg: DiagnosticsConfig, tag: int, n: int, p: int, rep: int) -> int:
    return replicate_seed(cfg.seed, (tag << 48) ^ (n << 24) ^ (p << 4) ^ rep)


def _row(n: int, p: int, metric: str, values: np.ndarray, bound: float) -> RateRow:
    mean = float(np.mean(values))
    return RateRow(n, p, metric, mean, float(np.quantile(values, 0.95)), mean / bound)


# -- eigenvector rates ----------------------------------------------------------


def aligned_error(Uhat, U) -> tuple[float, float]:
    """(aligned, raw) 2->inf distance between estimated and true eigenvectors."""
    Xi = linalg.procrustes_align(Uhat, U)
    aligned = linalg.two_to_inf_norm(Uhat @ Xi.T - U)
    raw = linalg.two_to_inf_norm(Uhat - U)
    return aligned, raw


def rate_check_theorem1(cfg: DiagnosticsConfig = DiagnosticsConfig()) -> list[RateRow]:
    """Mean aligned and raw ||U_hat - U||_{2->inf} per grid cell.

    The ratio column divides by sqrt(max(r(Sigma), ln p) / (n p)).
    """
    rows = []
    for n, p in cfg.grid:
        pop, U = spiked_population(p, cfg.spike)
        if coherence_constant(U) > cfg.coherence_cap + 1e-12:
            raise ValidationError("generated eigenvectors exceed the coherence cap")

        def one(rep: int, n=n, p=p, pop=pop, U=U):
            data = _sample_half(pop, n, make_rng(_cell_seed(cfg, 1, n, p, rep)))
            Uhat = fit_spiked(pooled_covariance(data), cfg.spike.d).U_hat
            return aligned_error(Uhat, U)

        errs = np.array(_map(one, cfg.reps, cfg.threads))
        bound = math.sqrt(max(linalg.effective_rank(pop.Sigma), math.log(p)) / (n * p))
        rows.append(_row(n, p, "eigvec_2inf_aligned", errs[:, 0], bound))
        rows.append(_row(n, p, "eigvec_2inf_raw", errs[:, 1], bound))
    return rows


# -- whitened-direction rates -----------------------------------------------------------


def estimate_zeta(data: LabeledDataset, d: int) -> np.ndarray:
    stats = pooled_covariance(data)
    W = fit_spiked(stats, d).whitener()
    return W.apply(stats.class_means[1] - stats.class_means[0])


def rate_check_theorem2(cfg: DiagnosticsConfig = DiagnosticsConfig()) -> list[RateRow]:
    """Mean and 0.95-quantile of ||zeta_hat - zeta||_inf; ratio to sqrt(ln p / n)."""
    rows = []
    for n, p in cfg.grid:
        pop, _ = spiked_population(p, cfg.spike)
        zeta = pop.zeta

        def one(rep: int, n=n, p=p, pop=pop, zeta=zeta):
            data = _sample_half(pop, n, make_rng(_cell_seed(cfg, 2, n, p, rep)))
            return float(np.max(np.abs(estimate_zeta(data, cfg.spike.d) - zeta)))

        errs = np.array(_map(one, cfg.reps, cfg.threads))
        rows.append(_row(n, p, "zeta_inf", errs, math.sqrt(math.log(p) / n)))
    return rows


def calibrate_constant(rows: list[RateRow], quantile: bool = True) -> float:
    """Constant fitted on the smallest-n cell: q95 (or mean) / sqrt(ln p / n)."""
    cell = min(rows, key=lambda r: (r.n, r.p))
    value = cell.q95 if quantile else cell.mean
    return value / math.sqrt(math.log(cell.p) / cell.n)


# -- support recovery --------------------------------------------------------------


def selection_consistency_check(
    cfg: DiagnosticsConfig = DiagnosticsConfig(),
    population: Callable[[int], Population] | None = None,
    d: int | Callable[[int], int] | None = None,
) -> list[RateRow]:
    """Fraction of replicates where the hard-threshold support equals the true support.

    ``population(p)`` overrides the default spiked population; ``d`` is the
    number of spikes fitted (default: the spike spec's d). The ``q95``
    column holds the binomial standard error of the fraction.
    """
    rows = []
    for n, p in cfg.grid:
        pop = population(p) if population is not None else spiked_population(p, cfg.spike)[0]
        truth = pop.support()
        dd = d(p) if callable(d) else (d if d is not None else cfg.spike.d)

        def one(rep: int, n=n, p=p, pop=pop, truth=truth):
            data = _sample_half(pop, n, make_rng(_cell_seed(cfg, 3, n, p, rep)))
            zeta_hat = estimate_zeta(data, dd)
            try:
                chosen, _ = hard_threshold(zeta_hat, data.n, p, cfg.C, cfg.alpha)
            except EmptySelectionError:
                return False
            return bool(np.array_equal(np.sort(chosen), truth))

        hits = np.array(_map(one, cfg.reps, cfg.threads), dtype=float)
        frac = float(hits.mean())
        se = math.sqrt(frac * (1 - frac) / hits.size)
        rows.append(RateRow(n, p, "support_recovery", frac, se, frac))
    return rows


def nondecreasing_in_n(rows: list[RateRow], slack_sd: float = 2.0) -> bool:
    """Recovery fractions never fall by more than ``slack_sd`` binomial sds as n grows."""
    for p in sorted({r.p for r in rows}):
        cells = sorted((r for r in rows if r.p == p), key=lambda r: r.n)
        for a, b in zip(cells, cells[1:]):
            sd = math.sqrt(a.q95**2 + b.q95**2)
            if b.mean < a.mean - slack_sd * max(sd, 1e-12):
                return False
    return True


def decay_factors(rows: list[RateRow], metric: str) -> dict[tuple[int, int, int], float]:
    """mean(n_next) / mean(n) for consecutive n at each p, keyed by (p, n, n_next)."""
    out = {}
    picked = [r for r in rows if r.metric == metric]
    for p in sorted({r.p for r in picked}):
        cells = sorted((r for r in picked if r.p == p), key=lambda r: r.n)
        for a, b in zip(cells, cells[1:]):
            out[(p, a.n, b.n)] = b.mean / a.mean
    return out


# -- structural identities -------------------------------------------------------------


def whitening_identity_check(
    n_factor: float, p: int = 40, reps: int = 20, seed: int = 0, spike: SpikeSpec = SpikeSpec()
) -> float:
    """Median over replicates of ||W_hat Sigma W_hat - I||_2 with n = n_factor * p samples.

    Sigma is the population covariance, so the deviation isolates the error of
    the estimated whitener.
    """
    pop, _ = spiked_population(p, spike)
    n = int(round(n_factor * p))
    if n < 2 * (spike.d + 2):
        raise ValidationError(f"n_factor * p = {n} is too small")
    devs = []
    for rep in range(reps):
        data = _sample_half(pop, n, make_rng(replicate_seed(seed, rep)))
        W = fit_spiked(pooled_covariance(data), spike.d).whitener().matrix()
        devs.append(identity_deviation(W, pop.Sigma))
    return float(np.median(devs))


def identity_deviation(W, Sigma) -> float:
    W = np.asarray(W, dtype=float)
    M = W @ Sigma @ W.T
    return float(np.linalg.norm(M - np.eye(M.shape[0]), 2))


def rotation_sparsity(Sigma, delta_mu, gamma: float = 0.25, tol: float = 1e-8) -> int:
    """Number of nonzero coordinates of beta in the rotated basis (relative tolerance ``tol``)."""
    basis = rotation_basis(Sigma, delta_mu, gamma)
    beta = np.linalg.solve(Sigma, np.asarray(delta_mu, dtype=float))
    coords = np.abs(basis.T @ beta)
    return int(np.sum(coords > tol * coords.max()))


def kclass_reduction_mismatches(train: LabeledDataset, Z, d: int, s: int) -> int:
    """Points where the K-class rule with K = 2 disagrees with the binary rule."""
    binary = fit_pclda(train, d, s).predict_index(Z)
    multi = fit_kclass(train, d, s).predict_index(Z)
    return int(np.sum(binary != multi))


def gram_dense_gap(Xc, k: int) -> tuple[float, float]:
    """Largest eigenvalue gap (relative) and eigenvector gap between the two eigen paths."""
    Xc = np.asarray(Xc, dtype=float)
    n = Xc.shape[0]
    dense = linalg.sym_eigendecomp(Xc.T @ Xc / n, k)
    gram = linalg.top_eigenpairs_gram(Xc, k)
    value_gap = float(np.max(np.abs(dense.values - gram.values)) / dense.values[0])
    vector_gap = float(np.max(np.abs(dense.vectors - gram.vectors)))
    return value_gap, vector_gap
