"""Nearest shrunken centroids baseline.

Class centroids are shrunk toward the overall centroid by soft-thresholding
standardised differences

    d_kj = (xbar_kj - xbar_j) / (m_k s_j),   m_k = sqrt(1/n_k - 1/n),

and a point is assigned to the class minimising the diagonal discriminant
``sum_j (x_j - xbar'_kj)^2 / s_j^2 - 2 ln pi_k``. Pooled within-class
standard deviations are floored at 1e-3 times their median; no other
offset is added, so ``delta = 0`` is exactly diagonal LDA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import LabeledDataset
from .errors import ValidationError

SD_FLOOR = 1e-3


@dataclass(frozen=True)
class NSCStatistics:
    """Shrinkage-independent quantities, shared across a delta path."""

    overall: np.ndarray
    centroids: np.ndarray
    sd: np.ndarray
    m: np.ndarray
    log_priors: np.ndarray
    classes: tuple

    @classmethod
    def from_data(cls, train: LabeledDataset) -> NSCStatistics:
        X, y, K = train.features, train.y, train.n_classes
        counts = train.counts
        if K < 2 or train.n <= K:
            raise ValidationError("NSC needs at least two classes and n > K")
        centroids = np.vstack([X[y == k].mean(axis=0) for k in range(K)])
        resid = X - centroids[y]
        sd = np.sqrt(np.einsum("ij,ij->j", resid, resid) / (train.n - K))
        med = float(np.median(sd))
        floor = SD_FLOOR * med if med > 0 else np.finfo(float).tiny
        sd = np.maximum(sd, floor)
        m = np.sqrt(1.0 / counts - 1.0 / train.n)
        return cls(X.mean(axis=0), centroids, sd, m, np.log(counts / train.n), train.classes)

    def standardized_differences(self) -> np.ndarray:
        return (self.centroids - self.overall) / (self.m[:, None] * self.sd)

    def max_delta(self) -> float:
        return float(np.max(np.abs(self.standardized_differences())))


@dataclass(frozen=True)
class NSCModel:
    stats: NSCStatistics
    delta: float
    shrunk_differences: np.ndarray

    @classmethod
    def fit(cls, train: LabeledDataset, delta: float) -> NSCModel:
        return cls.from_statistics(NSCStatistics.from_data(train), delta)

    @classmethod
    def from_statistics(cls, stats: NSCStatistics, delta: float) -> NSCModel:
        if not delta >= 0:
            raise ValidationError(f"delta must be non-negative, got {delta}")
        dk = stats.standardized_differences()
        shrunk = np.sign(dk) * np.maximum(np.abs(dk) - delta, 0.0)
        return cls(stats, float(delta), shrunk)

    @property
    def shrunken_centroids(self) -> np.ndarray:
        s = self.stats
        return s.overall + s.m[:, None] * s.sd * self.shrunk_differences

    @property
    def active_features(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.shrunk_differences != 0, axis=0))

    def discriminants(self, Z) -> np.ndarray:
        """Diagonal discriminant per class; smaller is better. Shape (n, K)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        inv_var = 1.0 / self.stats.sd**2
        C = self.shrunken_centroids
        # expand ||z - c||^2_D, dropping the class-independent ||z||^2_D term
        cross = Z @ (C * inv_var).T
        norms = np.einsum("kj,kj,j->k", C, C, inv_var)
        return norms - 2.0 * cross - 2.0 * self.stats.log_priors

    def predict_index(self, Z) -> np.ndarray:
        return np.argmin(self.discriminants(Z), axis=1)

    def predict(self, Z):
        return np.asarray(self.stats.classes, dtype=object)[self.predict_index(Z)]


def fit_nsc(train: LabeledDataset, delta: float) -> NSCModel:
    return NSCModel.fit(train, delta)


def predict_nsc(model: NSCModel, z):
    return model.predict(z)


def delta_grid(stats: NSCStatistics, size: int = 30) -> np.ndarray:
    """Evenly spaced shrinkage values from 0 to the point where every feature is dropped."""
    top = stats.max_delta()
    return np.linspace(0.0, top * (1 + 1e-9), size) if top > 0 else np.zeros(1)


def diagonal_lda_predict(train: LabeledDataset, Z) -> np.ndarray:
    """Plain diagonal LDA (naive Bayes with pooled variances), for cross-checks."""
    X, y = train.features, train.y
    K = train.n_classes
    means = np.vstack([X[y == k].mean(axis=0) for k in range(K)])
    var = np.einsum("ij,ij->j", X - means[y], X - means[y]) / (train.n - K)
    log_priors = np.log(train.counts / train.n)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    dist = np.stack([((Z - means[k]) ** 2 / var).sum(axis=1) for k in range(K)], axis=1)
    return np.argmin(dist - 2.0 * log_priors, axis=1)


def nsc_path_errors(stats: NSCStatistics, deltas, Z, y) -> np.ndarray:
    """Validation error for each delta, reusing one set of statistics."""
    return np.array([math.fsum(NSCModel.from_statistics(stats, dl).predict_index(Z) != y) / len(y) for dl in deltas])
