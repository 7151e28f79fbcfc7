"""Pooled covariance, spiked-model fitting and the implicit whitening operator.

The whitener estimated from a spiked fit is

    W = U diag(eta) U' + (I - U U') / sigma,   eta_k = (lambda_k + sigma^2)^(-1/2),

with (lambda, U) the top-d eigenpairs of the pooled covariance and sigma^2
the average of the remaining eigenvalues. It is applied in O(pd) per vector
and never stored as a p x p matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import linalg
from .dataio import LabeledDataset
from .errors import DegenerateError, DomainError, InsufficientDataError, ValidationError

DEFAULT_VARIANCE_FRACTION = 0.9


@dataclass(frozen=True)
class PooledStats:
    """Class means, counts and class-centred rows of a training set.

    The pooled covariance uses divisor n (the total sample size), not n - K.
    """

    class_means: np.ndarray
    counts: np.ndarray
    centered: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def p(self) -> int:
        return self.centered.shape[1]

    @property
    def trace(self) -> float:
        return float(np.einsum("ij,ij->", self.centered, self.centered) / self.n)

    @cached_property
    def sigma_hat(self) -> np.ndarray:
        """Dense pooled covariance; only materialise this when p is modest."""
        S = self.centered.T @ self.centered / self.n
        return 0.5 * (S + S.T)

    def spectrum(self) -> np.ndarray:
        """The min(n, p) eigenvalues of the pooled covariance that can be nonzero."""
        return linalg.gram_spectrum(self.centered)


def pooled_covariance(data: LabeledDataset) -> PooledStats:
    if data.n_classes < 2:
        raise InsufficientDataError("need at least two classes")
    counts = data.counts
    if np.any(counts < 2):
        small = [data.classes[i] for i in np.flatnonzero(counts < 2)]
        raise InsufficientDataError(f"classes {small} have fewer than 2 samples")
    X = data.features
    means = np.vstack([X[data.y == c].mean(axis=0) for c in range(data.n_classes)])
    centered = X - means[data.y]
    return PooledStats(means, counts, centered)


@dataclass(frozen=True)
class SpikedCovModel:
    """Spiked covariance estimate ``U diag(lambda) U' + sigma2 (I - U U')``."""

    U_hat: np.ndarray
    lambda_hat: np.ndarray
    sigma2_hat: float

    def __post_init__(self):
        U = np.asarray(self.U_hat, dtype=float)
        lam = np.asarray(self.lambda_hat, dtype=float).reshape(-1)
        if U.ndim != 2 or U.shape[1] != lam.size:
            raise ValidationError("U_hat must be p x d with d = len(lambda_hat)")
        if lam.size and (np.any(np.diff(lam) > 0) or lam[-1] <= 0):
            raise ValidationError("lambda_hat must be positive and non-increasing")
        if not self.sigma2_hat > 0:
            raise ValidationError("sigma2_hat must be positive")
        object.__setattr__(self, "U_hat", U)
        object.__setattr__(self, "lambda_hat", lam)
        object.__setattr__(self, "sigma2_hat", float(self.sigma2_hat))

    @property
    def p(self) -> int:
        return self.U_hat.shape[0]

    @property
    def d(self) -> int:
        return self.U_hat.shape[1]

    def whitener(self) -> WhiteningOperator:
        return WhiteningOperator(self)


def _use_gram(n: int, p: int) -> bool:
    return p > 4 * n or (p > 2000 and n < p)


def fit_spiked(source, d: int) -> SpikedCovModel:
    """Fit the spiked model from :class:`PooledStats` or a dense covariance."""
    if isinstance(source, PooledStats):
        n, p = source.n, source.p
        if not 1 <= d < min(n, p):
            raise ValidationError(f"d must lie in [1, {min(n, p) - 1}], got {d}")
        if _use_gram(n, p):
            pairs = linalg.top_eigenpairs_gram(source.centered, d)
        else:
            pairs = linalg.sym_eigendecomp(source.sigma_hat, d)
        trace = source.trace
    else:
        S = linalg.check_symmetric(source)
        p = S.shape[0]
        if not 1 <= d < p:
            raise ValidationError(f"d must lie in [1, {p - 1}], got {d}")
        pairs = linalg.sym_eigendecomp(S, d)
        trace = float(np.trace(S))
    bulk = trace - float(pairs.values.sum())
    sigma2 = bulk / (p - d)
    if not sigma2 > 1e-12 * max(trace, np.finfo(float).tiny) / p or pairs.values[-1] <= 0:
        raise DegenerateError(
            f"no variance left outside the top {d} eigenvalues (sigma^2 = {sigma2:.3g}); d is too large"
        )
    return SpikedCovModel(pairs.vectors, pairs.values, sigma2)


def choose_d(
    eigenvalues, frac: float = DEFAULT_VARIANCE_FRACTION, total: float | None = None,
    cap: int | None = None,
) -> int:
    """Smallest d whose leading eigenvalues explain at least ``frac`` of ``total``.

    ``total`` defaults to the sum of ``eigenvalues`` (the trace when the full
    nonzero spectrum is passed). The result is clipped to ``cap``.
    """
    lam = np.asarray(eigenvalues, dtype=float).reshape(-1)
    if not 0 < frac < 1:
        raise ValidationError(f"frac must lie in (0, 1), got {frac}")
    if lam.size == 0 or np.any(lam < 0) or not np.any(lam > 0):
        raise ValidationError("eigenvalues must be non-negative and not all zero")
    if np.any(np.diff(lam) > 1e-12 * lam[0]):
        raise ValidationError("eigenvalues must be non-increasing")
    total = float(lam.sum()) if total is None else float(total)
    ratio = np.cumsum(lam) / total
    hits = np.flatnonzero(ratio >= frac - 1e-12)
    d = int(hits[0]) + 1 if hits.size else lam.size
    if cap is not None:
        d = min(d, cap)
    return max(d, 1)


def choose_d_for(stats: PooledStats, frac: float = DEFAULT_VARIANCE_FRACTION) -> int:
    """The variance-fraction rule on a training set, capped below the rank of the pooled covariance."""
    spectrum = stats.spectrum()
    rank = int(np.sum(spectrum > spectrum[0] * 1e-10)) if spectrum[0] > 0 else 0
    cap = min(stats.n, stats.p) - 1
    # d must leave positive bulk variance, so stay strictly below the rank
    cap = min(cap, rank - 1)
    if cap < 1:
        raise DegenerateError("pooled covariance has rank < 2; cannot fit a spiked model")
    return choose_d(spectrum, frac, total=stats.trace, cap=cap)


class WhiteningOperator:
    """Implicit spiked whitener; ``apply`` accepts a p-vector or an n x p row block."""

    def __init__(self, model: SpikedCovModel):
        self.model = model
        self.eta_hat = 1.0 / np.sqrt(model.lambda_hat + model.sigma2_hat)
        self.inv_sigma_hat = 1.0 / np.sqrt(model.sigma2_hat)
        self._delta = self.eta_hat - self.inv_sigma_hat

    @property
    def p(self) -> int:
        return self.model.p

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.p:
            raise ValidationError(f"expected trailing dimension {self.p}, got {v.shape}")
        U = self.model.U_hat
        # W is symmetric, so rows transform as x W
        return (v @ U) * self._delta @ U.T + self.inv_sigma_hat * v

    __call__ = apply

    def matrix(self) -> np.ndarray:
        """Dense p x p form, for checks at small p."""
        return self.apply(np.eye(self.p))


def whiten(W, v) -> np.ndarray:
    return W.apply(v)


class DenseWhitener:
    """A whitening map held as an explicit symmetric matrix."""

    def __init__(self, W: np.ndarray):
        self.W = W

    @property
    def p(self) -> int:
        return self.W.shape[0]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.p:
            raise ValidationError(f"expected trailing dimension {self.p}, got {v.shape}")
        return v @ self.W

    __call__ = apply

    def matrix(self) -> np.ndarray:
        return self.W


def inverse_sqrt(Sigma) -> np.ndarray:
    """Symmetric inverse square root of a positive-definite matrix."""
    S = linalg.check_symmetric(Sigma)
    values, vectors = scipy.linalg.eigh(0.5 * (S + S.T))
    if values[0] <= 0:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {values[0]:.3g})")
    W = (vectors / np.sqrt(values)) @ vectors.T
    return 0.5 * (W + W.T)


def whitening_exact(Sigma) -> DenseWhitener:
    return DenseWhitener(inverse_sqrt(Sigma))
