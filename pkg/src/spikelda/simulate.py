"""Simulation models, samplers, per-replicate metrics and the Monte Carlo harness.

Three covariance families are provided, each with the two-class mean
convention mu1 = 0, mu2 = (1, ..., 1, 0, ..., 0) with ten leading ones:

* ``EqualCorr(rho)``: rho 11' + (1 - rho) I.
* ``BlockDiag(rho, block)``: two equicorrelation blocks, sizes ``block`` and p - block.
* ``RandomCorr(rank, entry_dist)``: L L' + c I with L p x rank, c = min_i (L L')_ii,
  redrawn for every replicate.

Sampling never forms a p x p square root: the equicorrelation families use
the closed-form symmetric root ``a I + b 11'`` per block, and the random
family draws ``L g + sqrt(c) e``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .dataio import LabeledDataset
from .errors import DegenerateError, RunError, SpikeLDAError, ValidationError
from .nsc import NSCModel
from .pclda import OracleRule, Threshold, TopS, fit_pclda, oracle_fisher
from .tuning import cv_select_delta, cv_select_s
from .whitening import DenseWhitener, choose_d_for, inverse_sqrt, pooled_covariance

SIGNAL_SIZE = 10
STRONG = frozenset(range(SIGNAL_SIZE))


# -- random streams -------------------------------------------------------------


def replicate_seed(base_seed: int, replicate: int) -> int:
    """64-bit seed for one replicate, derived from (base_seed, replicate)."""
    state = np.random.SeedSequence([int(base_seed), int(replicate)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


# -- covariance models -------------------------------------------------------------


@dataclass(frozen=True)
class EqualCorr:
    rho: float

    name = "eqcorr"


@dataclass(frozen=True)
class BlockDiag:
    rho: float
    block: int = 20

    name = "block"


@dataclass(frozen=True)
class RandomCorr:
    rank: int = 10
    entry_dist: str = "normal"

    name = "random"


ModelSpec = Union[EqualCorr, BlockDiag, RandomCorr]


@dataclass(frozen=True)
class SimSpec:
    model: ModelSpec
    p: int = 800
    n_train: int = 100
    n_test: int = 100


class EquicorrFactor:
    """Symmetric square root of a block-diagonal equicorrelation matrix."""

    def __init__(self, blocks: tuple[int, ...], rho: float):
        self.blocks = tuple(int(b) for b in blocks)
        self.rho = float(rho)
        self.a = math.sqrt(1.0 - rho)
        self.b = tuple((math.sqrt(1.0 + (m - 1) * rho) - self.a) / m for m in self.blocks)

    @property
    def noise_dim(self) -> int:
        return sum(self.blocks)

    def apply(self, E: np.ndarray) -> np.ndarray:
        out = self.a * E
        start = 0
        for m, b in zip(self.blocks, self.b):
            sl = slice(start, start + m)
            out[:, sl] += b * E[:, sl].sum(axis=1, keepdims=True)
            start += m
        return out


class LowRankFactor:
    """Factor ``[L | sqrt(c) I]`` of ``L L' + c I``."""

    def __init__(self, L: np.ndarray, c: float):
        self.L = L
        self.c = float(c)

    @property
    def noise_dim(self) -> int:
        return self.L.shape[1] + self.L.shape[0]

    def apply(self, E: np.ndarray) -> np.ndarray:
        r = self.L.shape[1]
        return E[:, :r] @ self.L.T + math.sqrt(self.c) * E[:, r:]


@dataclass
class Population:
    """Two Gaussian classes sharing one covariance."""

    mu1: np.ndarray
    mu2: np.ndarray
    Sigma: np.ndarray
    factor: object
    _whitener: DenseWhitener | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.mu1.size

    @property
    def whitener(self) -> DenseWhitener:
        if self._whitener is None:
            self._whitener = DenseWhitener(inverse_sqrt(self.Sigma))
        return self._whitener

    @property
    def zeta(self) -> np.ndarray:
        return self.whitener.apply(self.mu2 - self.mu1)

    @property
    def beta(self) -> np.ndarray:
        return np.linalg.solve(self.Sigma, self.mu2 - self.mu1)

    def support(self, tol: float = 1e-8) -> np.ndarray:
        z = np.abs(self.zeta)
        return np.flatnonzero(z > tol * z.max())

    def oracle(self, pi1: float = 0.5) -> OracleRule:
        return oracle_fisher(self.mu1, self.mu2, self.Sigma, pi1, whitener=self.whitener)

    def condition_number(self) -> float:
        values = np.linalg.eigvalsh(self.Sigma)
        return float(values[-1] / values[0])

    def sample(self, n1: int, n2: int, rng: np.random.Generator) -> LabeledDataset:
        X1 = sample_gaussian(self.mu1, self.factor, n1, rng)
        X2 = sample_gaussian(self.mu2, self.factor, n2, rng)
        return LabeledDataset.from_classes(X1, X2)


def _means(p: int) -> tuple[np.ndarray, np.ndarray]:
    mu2 = np.zeros(p)
    mu2[:SIGNAL_SIZE] = 1.0
    return np.zeros(p), mu2


def _check_rho(rho: float) -> None:
    if not 0 <= rho < 1:
        raise ValidationError(f"rho must lie in [0, 1), got {rho}")


def equicorrelation(m: int, rho: float) -> np.ndarray:
    return rho * np.ones((m, m)) + (1.0 - rho) * np.eye(m)


@lru_cache(maxsize=16)
def _cached_inverse_sqrt(kind: str, p: int, rho: float, block: int) -> np.ndarray:
    blocks = (p,) if kind == "eqcorr" else (block, p - block)
    W = np.zeros((p, p))
    start = 0
    for m in blocks:
        # (rho 11' + (1-rho) I)^(-1/2) = I/sqrt(1-rho) + c 11'
        c = ((1.0 + (m - 1) * rho) ** -0.5 - (1.0 - rho) ** -0.5) / m
        W[start : start + m, start : start + m] = c + np.eye(m) / math.sqrt(1.0 - rho)
        start += m
    W.setflags(write=False)
    return W


def gen_model1(p: int, rho: float) -> Population:
    _check_rho(rho)
    mu1, mu2 = _means(p)
    pop = Population(mu1, mu2, equicorrelation(p, rho), EquicorrFactor((p,), rho))
    pop._whitener = DenseWhitener(_cached_inverse_sqrt("eqcorr", p, float(rho), 0))
    return pop


def gen_model2(p: int, rho: float, block: int = 20) -> Population:
    _check_rho(rho)
    if p <= block:
        raise ValidationError(f"p must exceed the block size {block}, got {p}")
    mu1, mu2 = _means(p)
    Sigma = np.zeros((p, p))
    Sigma[:block, :block] = equicorrelation(block, rho)
    Sigma[block:, block:] = equicorrelation(p - block, rho)
    pop = Population(mu1, mu2, Sigma, EquicorrFactor((block, p - block), rho))
    pop._whitener = DenseWhitener(_cached_inverse_sqrt("block", p, float(rho), block))
    return pop


def draw_entries(entry_dist, shape, rng: np.random.Generator) -> np.ndarray:
    if callable(entry_dist):
        return np.asarray(entry_dist(rng, shape), dtype=float)
    if entry_dist == "normal":
        return rng.standard_normal(shape)
    if entry_dist == "uniform":
        return rng.uniform(-1.0, 1.0, shape)
    if entry_dist in ("t5", "student_t"):
        return rng.standard_t(5, shape)
    raise ValidationError(f"unknown entry distribution {entry_dist!r}")


def gen_model3(p: int, rank: int = 10, entry_dist="normal", rng: np.random.Generator | None = None) -> Population:
    """Random low-rank-plus-ridge covariance; one redraw is allowed if c <= 0."""
    if not 0 < rank < p:
        raise ValidationError(f"rank must lie in [1, {p - 1}], got {rank}")
    rng = rng if rng is not None else make_rng(0)
    for _ in range(2):
        L = draw_entries(entry_dist, (p, rank), rng)
        c = float(np.min(np.einsum("ij,ij->i", L, L)))
        if c > 0:
            break
    else:
        raise DegenerateError("random correlation draw has c_L = 0 twice in a row")
    mu1, mu2 = _means(p)
    Sigma = L @ L.T + c * np.eye(p)
    return Population(mu1, mu2, Sigma, LowRankFactor(L, c))


def model3_condition_number(pop: Population) -> float:
    """Condition number of L L' + c I from the rank x rank Gram matrix."""
    L, c = pop.factor.L, pop.factor.c
    top = np.linalg.eigvalsh(L.T @ L)[-1]
    return float((top + c) / c)


def make_population(spec: SimSpec, rng: np.random.Generator) -> Population:
    m = spec.model
    if isinstance(m, EqualCorr):
        return gen_model1(spec.p, m.rho)
    if isinstance(m, BlockDiag):
        return gen_model2(spec.p, m.rho, m.block)
    if isinstance(m, RandomCorr):
        return gen_model3(spec.p, m.rank, m.entry_dist, rng)
    raise ValidationError(f"unknown model {m!r}")


def sample_gaussian(mu, factor, n: int, rng: np.random.Generator) -> np.ndarray:
    """n rows of ``mu + F e`` with e standard normal.

    ``factor`` is a dense p x m matrix F or an object with ``noise_dim`` and
    ``apply(E)`` (rows of E mapped to rows of E F').
    """
    mu = np.asarray(mu, dtype=float)
    if isinstance(factor, np.ndarray):
        E = rng.standard_normal((n, factor.shape[1]))
        return mu + E @ factor.T
    E = rng.standard_normal((n, factor.noise_dim))
    return mu + factor.apply(E)


# -- metrics -------------------------------------------------------------------


def metrics(predictions, truth, positive=2) -> tuple[float, float, float]:
    """(error, FPR, FNR) with class ``positive`` as the positive class.

    A rate whose conditioning class is absent from ``truth`` is NaN.
    """
    pred = np.asarray(predictions)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError("predictions and truth differ in length")
    wrong = pred != truth
    error = float(wrong.mean()) if wrong.size else math.nan
    neg, pos = truth != positive, truth == positive
    fpr = float(wrong[neg].mean()) if neg.any() else math.nan
    fnr = float(wrong[pos].mean()) if pos.any() else math.nan
    return error, fpr, fnr


def strong_weak_counts(selected, strong=STRONG) -> tuple[int, int]:
    sel = set(int(j) for j in selected)
    strong = set(strong)
    return len(sel & strong), len(sel - strong)


@dataclass
class MetricsRow:
    error_rate: float
    fpr: float
    fnr: float
    model_size: int
    strong_hits: int
    weak_hits: int
    selected_equals_true: bool
    seed: int

    COLUMNS = (
        "error_rate", "fpr", "fnr", "model_size", "strong_hits", "weak_hits",
        "selected_equals_true", "seed",
    )


# -- methods -------------------------------------------------------------------


@dataclass(frozen=True)
class MethodConfig:
    """Classifier configuration for the harness.

    ``name`` is ``oracle``, ``pclda`` or ``nsc``. For PCLDA, ``d=None`` uses
    the variance-fraction rule and ``selection="top_s"`` tunes s by CV over
    ``s_candidates``; ``selection="threshold"`` uses the hard threshold.
    """

    name: str = "pclda"
    d: int | None = None
    frac: float = 0.9
    selection: str = "top_s"
    s: int | None = None
    s_candidates: tuple[int, ...] = tuple(range(1, 31))
    cv_folds: int = 5
    C: float = 2.0
    alpha: float = 0.3
    nsc_grid: int = 30

    def __post_init__(self):
        if self.name not in ("oracle", "pclda", "nsc"):
            raise ValidationError(f"unknown method {self.name!r}")
        if self.selection not in ("top_s", "threshold"):
            raise ValidationError(f"unknown selection {self.selection!r}")


@dataclass
class Fitted:
    predict: Callable[[np.ndarray], np.ndarray]
    selected: np.ndarray


def fit_method(method: MethodConfig, train: LabeledDataset, pop: Population, seed: int) -> Fitted:
    if method.name == "oracle":
        pi1 = train.counts[0] / train.n
        rule = pop.oracle(pi1)
        return Fitted(lambda Z: rule.predict_index(Z), pop.support())
    if method.name == "nsc":
        deltas = None
        delta, _ = cv_select_delta(train, deltas, k=method.cv_folds, seed=seed, grid=method.nsc_grid)
        model = NSCModel.fit(train, delta)
        return Fitted(model.predict_index, model.active_features)
    stats = pooled_covariance(train)
    d = method.d if method.d is not None else choose_d_for(stats, method.frac)
    if method.selection == "threshold":
        selection = Threshold(method.C, method.alpha, fallback=True)
    elif method.s is not None:
        selection = TopS(method.s)
    else:
        candidates = [s for s in method.s_candidates if s <= train.p]
        s, _ = cv_select_s(train, d, candidates, k=method.cv_folds, seed=seed)
        selection = TopS(s)
    model = fit_pclda(train, d, selection)
    return Fitted(model.predict_index, model.selected)


def run_replicate(spec: SimSpec, method: MethodConfig, base_seed: int, replicate: int) -> MetricsRow:
    seed = replicate_seed(base_seed, replicate)
    rng = make_rng(seed)
    pop = make_population(spec, rng)
    train = pop.sample(spec.n_train, spec.n_train, rng)
    test = pop.sample(spec.n_test, spec.n_test, rng)
    fitted = fit_method(method, train, pop, seed)
    pred = fitted.predict(test.features) + 1
    error, fpr, fnr = metrics(pred, test.y + 1)
    strong, weak = strong_weak_counts(fitted.selected)
    truth = pop.support()
    same = bool(np.array_equal(np.sort(fitted.selected), truth))
    return MetricsRow(error, fpr, fnr, int(len(fitted.selected)), strong, weak, same, seed)


@dataclass
class MCResult:
    rows: list[MetricsRow]
    failures: dict[int, str]
    spec: SimSpec
    method: MethodConfig
    base_seed: int

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def summary(self) -> dict[str, dict[str, float]]:
        """Arithmetic mean and sample standard deviation per metric column."""
        out = {}
        for name in MetricsRow.COLUMNS[:-1]:
            values = self.column(name)
            sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
            out[name] = {"mean": float(np.mean(values)), "sd": sd}
        return out


def run_mc(
    spec: SimSpec, method: MethodConfig, reps: int, base_seed: int = 0, threads: int = 1
) -> MCResult:
    """Run ``reps`` independent replicates; output does not depend on ``threads``."""
    if reps < 1:
        raise ValidationError("reps must be >= 1")

    def one(r: int):
        try:
            return run_replicate(spec, method, base_seed, r)
        except SpikeLDAError as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(reps)))
    else:
        outcomes = [one(r) for r in range(reps)]
    rows = [o for o in outcomes if isinstance(o, MetricsRow)]
    failures = {r: str(o) for r, o in enumerate(outcomes) if not isinstance(o, MetricsRow)}
    if len(failures) > 0.1 * reps:
        raise RunError(f"{len(failures)} of {reps} replicates failed; first: {next(iter(failures.values()))}")
    if not rows:
        raise RunError("no replicate succeeded")
    return MCResult(rows, failures, spec, method, base_seed)


# -- the bivariate projection experiment ---------------------------------------------


def projection_experiment(
    rng: np.random.Generator, n_per_class: int = 500, rho: float = 0.9
) -> dict[str, tuple[float, float, float]]:
    """One replicate of the bivariate thresholded-projection comparison.

    Fits the sample Bayes direction and the sample whitened direction, keeps
    only the largest-magnitude coordinate of each, and scores in-sample
    (error, FPR, FNR) for: raw data projected on the thresholded Bayes
    direction (``nu``), whitened data projected on the thresholded whitened
    direction (``nu_zeta``), and the full plug-in rule (``beta``).
    """
    Sigma = equicorrelation(2, rho)
    mu1, mu2 = np.zeros(2), np.array([1.0, 0.0])
    F = np.linalg.cholesky(Sigma)
    ds = LabeledDataset.from_classes(
        sample_gaussian(mu1, F, n_per_class, rng), sample_gaussian(mu2, F, n_per_class, rng)
    )
    stats = pooled_covariance(ds)
    diff = stats.class_means[1] - stats.class_means[0]
    mid = 0.5 * (stats.class_means[0] + stats.class_means[1])
    W = inverse_sqrt(stats.sigma_hat)
    beta = np.linalg.solve(stats.sigma_hat, diff)
    zeta = W @ diff
    X = ds.features - mid
    truth = ds.y + 1

    def keep_largest(v):
        out = np.zeros_like(v)
        j = int(np.argmax(np.abs(v)))
        out[j] = v[j]
        return out / np.linalg.norm(v)

    scores = {
        "nu": X @ keep_largest(beta),
        "nu_zeta": (X @ W) @ keep_largest(zeta),
        "beta": X @ beta,
    }
    return {k: metrics((s > 0).astype(int) + 1, truth) for k, s in scores.items()}


def run_projection_experiment(reps: int = 1000, base_seed: int = 0, n_per_class: int = 500, rho: float = 0.9):
    """Average (error, FPR, FNR) per projection over ``reps`` replicates."""
    acc = {k: np.zeros(3) for k in ("nu", "nu_zeta", "beta")}
    for r in range(reps):
        out = projection_experiment(make_rng(replicate_seed(base_seed, r)), n_per_class, rho)
        for k, v in out.items():
            acc[k] += v
    return {k: tuple((v / reps).tolist()) for k, v in acc.items()}


def summary_table(result: MCResult) -> list[dict]:
    return [dict(metric=k, **v) for k, v in result.summary().items()]


def rows_as_dicts(result: MCResult) -> list[dict]:
    return [asdict(r) for r in result.rows]
