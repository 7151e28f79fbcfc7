"""Stratified folds and cross-validated choice of s (PCLDA) and delta (NSC)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dataio import LabeledDataset
from .errors import InsufficientDataError, SpikeLDAError, TuningError, ValidationError
from .nsc import NSCStatistics, delta_grid, nsc_path_errors
from .whitening import choose_d_for, fit_spiked, pooled_covariance

DEFAULT_FOLDS = 5
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class CVPlan:
    k: int
    fold_of: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(training rows, validation rows) for one fold."""
        mask = self.fold_of == fold
        return np.flatnonzero(~mask), np.flatnonzero(mask)

    def __iter__(self):
        return (self.split(f) for f in range(self.k))


def kfold_stratified(labels, k: int = DEFAULT_FOLDS, seed: int = 0) -> CVPlan:
    """Assign each sample to one of ``k`` folds, class by class.

    Within a class, samples are shuffled with a generator keyed by
    (seed, class) and dealt round-robin, so per-class fold sizes differ by
    at most one. Each class starts dealing where the previous one stopped,
    which also balances total fold sizes.
    """
    if k < 2:
        raise ValidationError(f"need k >= 2 folds, got {k}")
    _, y = np.unique(np.asarray(labels), return_inverse=True)
    y = y.reshape(-1)
    counts = np.bincount(y)
    if np.any(counts < k):
        raise InsufficientDataError(f"every class needs at least k={k} samples; counts are {counts.tolist()}")
    fold_of = np.empty(y.size, dtype=int)
    start = 0
    for c, count in enumerate(counts):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), c])))
        rows = rng.permutation(np.flatnonzero(y == c))
        fold_of[rows] = (start + np.arange(count)) % k
        start = (start + count) % k
    return CVPlan(k, fold_of, int(seed))


def leave_one_out(n: int) -> CVPlan:
    return CVPlan(n, np.arange(n), 0)


def _argmin_smallest(candidates: list[int], errors: np.ndarray) -> int:
    ok = np.isfinite(errors)
    best = np.min(errors[ok])
    for s, e in zip(candidates, errors):
        if np.isfinite(e) and e <= best + _TIE_TOL:
            return s
    raise AssertionError("unreachable")


def cv_errors_s(
    train: LabeledDataset, d: int | None, candidates: Iterable[int], plan: CVPlan, frac: float = 0.9,
) -> np.ndarray:
    """Mean validation 0/1 error of binary PCLDA for each candidate s.

    A candidate that fails in any fold gets NaN. ``d=None`` re-applies the
    variance-fraction rule inside every fold.
    """
    candidates = list(candidates)
    if train.n_classes != 2:
        raise ValidationError("s tuning is defined for two classes")
    per_fold = np.full((plan.k, len(candidates)), np.nan)
    for f, (tr_rows, va_rows) in enumerate(plan):
        try:
            tr = train.subset(tr_rows)
            if tr.n_classes != 2:
                raise InsufficientDataError("fold lost a class")
            stats = pooled_covariance(tr)
            W = fit_spiked(stats, d if d is not None else choose_d_for(stats, frac)).whitener()
        except SpikeLDAError:
            continue
        white = W.apply(stats.class_means)
        zeta = white[1] - white[0]
        mid = 0.5 * (white[0] + white[1])
        order = np.argsort(-np.abs(zeta), kind="stable")
        usable = [s for s in candidates if 1 <= s <= zeta.size]
        if not usable:
            continue
        top = order[: max(usable)]
        Zc = W.apply(train.features[va_rows]) - mid
        running = np.cumsum(Zc[:, top] * zeta[top], axis=1)
        offset = math.log(stats.counts[0] / stats.counts[1])
        truth = train.y[va_rows]
        for j, s in enumerate(candidates):
            if 1 <= s <= zeta.size:
                pred = (running[:, s - 1] > offset).astype(int)
                per_fold[f, j] = np.mean(pred != truth)
    return per_fold.mean(axis=0)


def cv_select_s(
    train: LabeledDataset,
    d: int | None,
    candidates: Iterable[int] = range(1, 31),
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    plan: CVPlan | None = None,
    frac: float = 0.9,
) -> tuple[int, dict[int, float]]:
    """Pick s by k-fold CV error; ties go to the smaller s."""
    candidates = sorted(set(int(s) for s in candidates))
    if not candidates:
        raise ValidationError("no candidate values of s")
    plan = plan if plan is not None else kfold_stratified(train.labels, k, seed)
    errors = cv_errors_s(train, d, candidates, plan, frac)
    if not np.any(np.isfinite(errors)):
        raise TuningError("every candidate s failed in some fold")
    return _argmin_smallest(candidates, errors), dict(zip(candidates, errors.tolist()))


def cv_select_delta(
    train: LabeledDataset,
    deltas=None,
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    grid: int = 30,
    plan: CVPlan | None = None,
) -> tuple[float, dict[float, float]]:
    """Pick the NSC shrinkage by k-fold CV; ties go to the larger (sparser) delta."""
    if deltas is None:
        deltas = delta_grid(NSCStatistics.from_data(train), grid)
    deltas = np.sort(np.asarray(deltas, dtype=float))
    plan = plan if plan is not None else kfold_stratified(train.labels, k, seed)
    per_fold = np.full((plan.k, deltas.size), np.nan)
    for f, (tr_rows, va_rows) in enumerate(plan):
        try:
            stats = NSCStatistics.from_data(train.subset(tr_rows))
        except SpikeLDAError:
            continue
        per_fold[f] = nsc_path_errors(stats, deltas, train.features[va_rows], train.y[va_rows])
    errors = per_fold.mean(axis=0)
    if not np.any(np.isfinite(errors)):
        raise TuningError("NSC tuning failed in every fold")
    best = np.nanmin(errors)
    chosen = float(deltas[np.flatnonzero(errors <= best + _TIE_TOL)[-1]])
    return chosen, dict(zip(deltas.tolist(), errors.tolist()))
