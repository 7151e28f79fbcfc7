"""PCLDA classifiers, the oracle Fisher rule and rotation preprocessing.

Binary PCLDA whitens with a spiked-covariance estimate, keeps the
coordinates of the whitened mean difference ``zeta_hat`` that are largest in
magnitude, and applies Fisher's rule on those coordinates only:

    class 1  iff  zeta_S' (W z - W (xbar_1 + xbar_2)/2)_S <= ln(n_1 / n_2).

The K-class rule scores every class against the reference class (the
smallest label) and picks the argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.stats import norm

from .dataio import LabeledDataset
from .errors import DomainError, EmptySelectionError, ValidationError
from .linalg import check_symmetric, sym_eigendecomp, top_eigenpairs_gram
from .whitening import (
    DenseWhitener,
    PooledStats,
    WhiteningOperator,
    choose_d_for,
    fit_spiked,
    inverse_sqrt,
    pooled_covariance,
)

DEFAULT_C = 2.0
DEFAULT_ALPHA = 0.3
DEFAULT_GAMMA = 0.25


@dataclass(frozen=True)
class TopS:
    """Keep the ``s`` largest |zeta_hat| coordinates."""

    s: int

    def describe(self) -> dict:
        return {"kind": "top_s", "s": int(self.s)}


@dataclass(frozen=True)
class Threshold:
    """Keep coordinates with |zeta_hat| > C (ln p / n)^alpha.

    With ``fallback`` an empty result degrades to the single largest
    coordinate instead of raising.
    """

    C: float = DEFAULT_C
    alpha: float = DEFAULT_ALPHA
    fallback: bool = False

    def describe(self) -> dict:
        return {"kind": "threshold", "C": self.C, "alpha": self.alpha, "fallback": self.fallback}


Selection = Union[TopS, Threshold]


def _as_selection(selection) -> Selection:
    if isinstance(selection, (TopS, Threshold)):
        return selection
    if isinstance(selection, (int, np.integer)):
        return TopS(int(selection))
    raise ValidationError(f"unrecognised selection mode {selection!r}")


def select_top_s(zeta_hat, s: int) -> np.ndarray:
    """Indices of the ``s`` largest |zeta_hat|; ties to the lower index; sorted."""
    z = np.asarray(zeta_hat, dtype=float).reshape(-1)
    if s < 1:
        raise EmptySelectionError(f"s must be at least 1, got {s}")
    if s > z.size:
        raise ValidationError(f"s must not exceed p = {z.size}, got {s}")
    order = np.argsort(-np.abs(z), kind="stable")
    return np.sort(order[:s])


def threshold_level(n: int, p: int, C: float = DEFAULT_C, alpha: float = DEFAULT_ALPHA) -> float:
    """t_n = C (ln p / n)^alpha."""
    if not C > 0 or not 0 < alpha < 0.5:
        raise ValidationError(f"need C > 0 and 0 < alpha < 1/2, got C={C}, alpha={alpha}")
    if n < 2 or p < 2:
        raise ValidationError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
    return C * (math.log(p) / n) ** alpha


def hard_threshold(
    zeta_hat, n: int, p: int, C: float = DEFAULT_C, alpha: float = DEFAULT_ALPHA
) -> tuple[np.ndarray, float]:
    """Return ``({j : |zeta_hat_j| > t_n}, t_n)``; raises when nothing survives."""
    t_n = threshold_level(n, p, C, alpha)
    kept = np.flatnonzero(np.abs(np.asarray(zeta_hat, dtype=float)) > t_n)
    if kept.size == 0:
        raise EmptySelectionError(f"no coordinate exceeds t_n = {t_n:.4g}")
    return kept, t_n


def _select(zeta_hat: np.ndarray, selection: Selection, n: int) -> tuple[np.ndarray, float | None]:
    if isinstance(selection, TopS):
        return select_top_s(zeta_hat, selection.s), None
    try:
        return hard_threshold(zeta_hat, n, zeta_hat.size, selection.C, selection.alpha)
    except EmptySelectionError:
        if not selection.fallback:
            raise
        return select_top_s(zeta_hat, 1), threshold_level(n, zeta_hat.size, selection.C, selection.alpha)


def _resolve_whitener(stats: PooledStats, d: int | None) -> WhiteningOperator:
    if d is None:
        d = choose_d_for(stats)
    return fit_spiked(stats, d).whitener()


# -- binary rule ---------------------------------------------------------------


@dataclass(frozen=True)
class PCLDAModel:
    whitener: WhiteningOperator
    zeta_hat: np.ndarray
    selected: np.ndarray
    midpoint: np.ndarray
    prior_offset: float
    selection: Selection
    classes: tuple
    counts: tuple
    class_means: np.ndarray
    threshold: float | None = None

    @property
    def p(self) -> int:
        return self.zeta_hat.size

    @property
    def d(self) -> int:
        return self.whitener.model.d

    def decision_scores(self, Z) -> np.ndarray:
        """``zeta_S' (W z - midpoint)_S`` for each row (or the single vector) ``Z``."""
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.p:
            raise ValidationError(f"expected {self.p} features, got {Z.shape[-1]}")
        centred = self.whitener.apply(Z) - self.midpoint
        S = self.selected
        return centred[..., S] @ self.zeta_hat[S]

    def predict_index(self, Z) -> np.ndarray:
        """0 for class 1, 1 for class 2; exact ties go to class 1."""
        return (self.decision_scores(Z) > self.prior_offset).astype(int)

    def predict(self, Z):
        idx = self.predict_index(Z)
        return np.asarray(self.classes, dtype=object)[idx] if np.ndim(idx) else self.classes[int(idx)]


def fit_pclda(train: LabeledDataset, d: int | None = None, selection=TopS(10)) -> PCLDAModel:
    """Fit binary PCLDA. ``d=None`` applies the 90% variance rule."""
    if train.n_classes != 2:
        raise ValidationError(f"binary PCLDA needs exactly 2 classes, got {train.n_classes}")
    selection = _as_selection(selection)
    stats = pooled_covariance(train)
    W = _resolve_whitener(stats, d)
    white_means = W.apply(stats.class_means)
    zeta_hat = white_means[1] - white_means[0]
    selected, t_n = _select(zeta_hat, selection, stats.n)
    midpoint = W.apply(0.5 * (stats.class_means[0] + stats.class_means[1]))
    n1, n2 = (int(c) for c in stats.counts)
    return PCLDAModel(
        whitener=W,
        zeta_hat=zeta_hat,
        selected=selected,
        midpoint=midpoint,
        prior_offset=math.log(n1 / n2),
        selection=selection,
        classes=train.classes,
        counts=(n1, n2),
        class_means=stats.class_means,
        threshold=t_n,
    )


def predict_pclda(model: PCLDAModel, z):
    return model.predict(z)


# -- K-class rule --------------------------------------------------------------


@dataclass(frozen=True)
class KClassPCLDAModel:
    whitener: object
    white_means: np.ndarray
    directions: np.ndarray
    selected: tuple
    counts: tuple
    classes: tuple

    @property
    def K(self) -> int:
        return self.white_means.shape[0]

    @property
    def p(self) -> int:
        return self.white_means.shape[1]

    @property
    def union_support(self) -> np.ndarray:
        return np.unique(np.concatenate([s for s in self.selected[1:]]))

    def discriminants(self, Z) -> np.ndarray:
        """Scores D_1 = 0, D_i (i >= 2) relative to the reference class; shape (..., K)."""
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.p:
            raise ValidationError(f"expected {self.p} features, got {Z.shape[-1]}")
        Zw = self.whitener.apply(Z)
        out = np.zeros(Zw.shape[:-1] + (self.K,))
        ref = self.white_means[0]
        for i in range(1, self.K):
            S = self.selected[i]
            mid = 0.5 * (self.white_means[i] + ref)
            out[..., i] = (Zw[..., S] - mid[S]) @ self.directions[i, S] + math.log(
                self.counts[i] / self.counts[0]
            )
        return out

    def predict_index(self, Z) -> np.ndarray:
        # argmax returns the first maximiser: ties go to the smaller class index
        return np.argmax(self.discriminants(Z), axis=-1)

    def predict(self, Z):
        idx = self.predict_index(Z)
        return np.asarray(self.classes, dtype=object)[idx] if np.ndim(idx) else self.classes[int(idx)]


def fit_kclass(train: LabeledDataset, d: int | None = None, selection=TopS(10)) -> KClassPCLDAModel:
    """Fit K-class PCLDA.

    ``selection`` is one mode shared by all classes, or a sequence of K - 1
    modes (one per non-reference class, in class order).
    """
    K = train.n_classes
    if K < 2:
        raise ValidationError("need at least two classes")
    if isinstance(selection, Sequence) and not isinstance(selection, str):
        modes = [_as_selection(s) for s in selection]
        if len(modes) != K - 1:
            raise ValidationError(f"expected {K - 1} selection modes, got {len(modes)}")
    else:
        modes = [_as_selection(selection)] * (K - 1)
    stats = pooled_covariance(train)
    W = _resolve_whitener(stats, d)
    white_means = W.apply(stats.class_means)
    directions = white_means - white_means[0]
    selected = [np.arange(0)]
    for i in range(1, K):
        S, _ = _select(directions[i], modes[i - 1], stats.n)
        selected.append(S)
    return KClassPCLDAModel(
        whitener=W,
        white_means=white_means,
        directions=directions,
        selected=tuple(selected),
        counts=tuple(int(c) for c in stats.counts),
        classes=train.classes,
    )


def kclass_from_params(means, Sigma, priors=None, classes=None) -> KClassPCLDAModel:
    """K-class rule built from known population parameters (all coordinates kept)."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    K, p = means.shape
    W = DenseWhitener(inverse_sqrt(Sigma))
    white_means = W.apply(means)
    priors = np.full(K, 1.0 / K) if priors is None else np.asarray(priors, dtype=float)
    full = np.arange(p)
    return KClassPCLDAModel(
        whitener=W,
        white_means=white_means,
        directions=white_means - white_means[0],
        selected=(np.arange(0),) + (full,) * (K - 1),
        counts=tuple(priors.tolist()),
        classes=tuple(classes) if classes is not None else tuple(range(1, K + 1)),
    )


def predict_kclass(model: KClassPCLDAModel, z):
    return model.predict(z)


# -- oracle rule and Bayes risk -------------------------------------------------


@dataclass(frozen=True)
class OracleRule:
    """Fisher's rule with known means, covariance and prior."""

    whitener: DenseWhitener
    zeta: np.ndarray
    midpoint: np.ndarray
    pi1: float

    @property
    def beta(self) -> np.ndarray:
        """Bayes direction Sigma^{-1} (mu2 - mu1)."""
        return self.whitener.apply(self.zeta)

    @property
    def threshold(self) -> float:
        return math.log(self.pi1 / (1.0 - self.pi1))

    def bayes_risk(self) -> float:
        return bayes_risk(float(np.linalg.norm(self.zeta)), self.pi1)

    def decision_scores(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return (self.whitener.apply(Z) - self.midpoint) @ self.zeta

    def predict_index(self, Z) -> np.ndarray:
        return (self.decision_scores(Z) > self.threshold).astype(int)


def oracle_fisher(mu1, mu2, Sigma, pi1: float = 0.5, whitener: DenseWhitener | None = None) -> OracleRule:
    """Build the oracle rule; a precomputed ``whitener`` for ``Sigma`` may be passed in."""
    if not 0 < pi1 < 1:
        raise ValidationError(f"pi1 must lie in (0, 1), got {pi1}")
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if whitener is None:
        whitener = DenseWhitener(inverse_sqrt(Sigma))
    zeta = whitener.apply(mu2 - mu1)
    if not np.linalg.norm(zeta) > 0:
        raise DomainError("class means coincide; the rule is undefined")
    return OracleRule(whitener, zeta, whitener.apply(0.5 * (mu1 + mu2)), float(pi1))


def predict_oracle(rule: OracleRule, z):
    """1 or 2 for each row of ``z``."""
    return rule.predict_index(z) + 1


def bayes_risk(zeta_norm: float, pi1: float = 0.5) -> float:
    """Misclassification probability of Fisher's rule with known parameters.

    ``pi1 Phi(-D/2 + ln((1-pi1)/pi1)/D) + (1-pi1) Phi(-D/2 - ln((1-pi1)/pi1)/D)``
    with D = ||zeta||.
    """
    if not zeta_norm > 0:
        raise ValidationError("zeta_norm must be positive")
    if not 0 < pi1 < 1:
        raise ValidationError(f"pi1 must lie in (0, 1), got {pi1}")
    D = float(zeta_norm)
    shift = math.log((1.0 - pi1) / pi1) / D
    return float(pi1 * norm.cdf(-D / 2 + shift) + (1.0 - pi1) * norm.cdf(-D / 2 - shift))


# -- rotation preprocessing -----------------------------------------------------


def rotation_basis(Sigma, delta_mu, gamma: float = DEFAULT_GAMMA, m: int | None = None) -> np.ndarray:
    """Top-``m`` eigenvectors of ``Sigma + gamma dmu dmu'`` for a known covariance."""
    S = check_symmetric(Sigma)
    p = S.shape[0]
    m = p if m is None else m
    if not 0 < m <= p:
        raise ValidationError(f"m must lie in [1, {p}], got {m}")
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    dmu = np.asarray(delta_mu, dtype=float).reshape(-1)
    return sym_eigendecomp(S + gamma * np.outer(dmu, dmu), m).vectors


def rotate_preprocess(
    train: LabeledDataset, gamma: float = DEFAULT_GAMMA, m: int | None = None
) -> tuple[LabeledDataset, np.ndarray]:
    """Rotate a two-class training set onto the top eigenvectors of Sigma_hat + gamma dX dX'.

    Returns the m-dimensional rotated dataset and the p x m basis.
    """
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    stats = pooled_covariance(train)
    n, p = stats.n, stats.p
    m = min(n, p) if m is None else m
    if not 0 < m <= min(n, p):
        raise ValidationError(f"m must lie in [1, {min(n, p)}], got {m}")
    dX = stats.class_means[-1] - stats.class_means[0]
    if p > 4 * n or (p > 2000 and n < p):
        # Sigma_hat + gamma dX dX' = Y'Y / n with one extra row appended
        rows = np.vstack([stats.centered, math.sqrt(n * gamma) * dX])
        vectors = top_eigenpairs_gram(rows * math.sqrt((n + 1) / n), m).vectors
    else:
        vectors = sym_eigendecomp(stats.sigma_hat + gamma * np.outer(dX, dX), m).vectors
    rotated = LabeledDataset(train.features @ vectors, train.labels)
    return rotated, vectors
