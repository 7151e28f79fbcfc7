"""Labelled datasets, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, SchemaError, SplitError, ValidationError

DEFAULT_LABEL_COLUMN = "label"


@dataclass(frozen=True)
class LabeledDataset:
    """An n x p feature matrix with one class label per row.

    Classes are ordered by sorting the distinct labels; the first one plays
    the role of "class 1" in every binary rule.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    classes: tuple = field(init=False)
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValidationError(f"features must be 2-d, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValidationError(f"need n >= 2 and p >= 1, got {X.shape}")
        if labels.shape != (n,):
            raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise ValidationError(f"non-finite feature at row {bad[0]}, column {bad[1]}")
        if self.feature_names is not None and len(self.feature_names) != p:
            raise ValidationError("feature_names length does not match p")
        classes, y = np.unique(labels, return_inverse=True)
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", tuple(classes.tolist()))
        object.__setattr__(self, "y", y.reshape(-1))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def class_index(self) -> dict:
        return {c: i for i, c in enumerate(self.classes)}

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, rows) -> LabeledDataset:
        rows = np.asarray(rows)
        return LabeledDataset(self.features[rows], self.labels[rows], self.feature_names)

    @classmethod
    def from_classes(cls, *blocks, labels: Sequence | None = None) -> LabeledDataset:
        """Stack per-class sample blocks; labels default to 1, 2, ..."""
        labels = list(labels) if labels is not None else list(range(1, len(blocks) + 1))
        X = np.vstack([np.atleast_2d(b) for b in blocks])
        y = np.concatenate([np.full(len(b), lab) for b, lab in zip(blocks, labels)])
        return cls(X, y)


def _parse_cell(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_csv(path, label_column: str = DEFAULT_LABEL_COLUMN) -> LabeledDataset:
    """Read a headed, comma-separated file with one label column.

    Every other column is parsed as a real feature in header order. Missing
    cells are errors (nothing is imputed); error messages number data rows
    from 1.
    """
    features, labels, names = _read_table(path, label_column, require_label=True)
    return LabeledDataset(features, np.asarray(labels), tuple(names))


def load_features_csv(path, label_column: str = DEFAULT_LABEL_COLUMN):
    """Read a feature CSV whose label column is optional.

    Returns ``(features, labels_or_None, feature_names)``.
    """
    features, labels, names = _read_table(path, label_column, require_label=False)
    return features, (np.asarray(labels) if labels is not None else None), tuple(names)


def _read_table(path, label_column: str, require_label: bool):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        if label_column in header:
            label_at = header.index(label_column)
        elif require_label:
            raise SchemaError(f"{path}: label column {label_column!r} not in header")
        else:
            label_at = None
        names = [h for i, h in enumerate(header) if i != label_at]
        rows, labels = [], []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"{path}: row {r} has {len(record)} cells, expected {len(header)}")
            values = []
            for i, cell in enumerate(record):
                if i == label_at:
                    if cell.strip() == "":
                        raise ParseError(f"{path}: row {r}, column {label_column!r}: missing label")
                    labels.append(cell.strip())
                else:
                    values.append(_parse_cell(cell.strip(), r, header[i]))
            rows.append(values)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return features, (labels if label_at is not None else None), names


def save_csv(ds: LabeledDataset, path, label_column: str = DEFAULT_LABEL_COLUMN) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces the features bit-exactly."""
    names = ds.feature_names or tuple(f"x{j + 1}" for j in range(ds.p))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([label_column, *names])
        for label, row in zip(ds.labels, ds.features):
            writer.writerow([label, *(format(v, ".17g") for v in row)])


def train_test_split(
    ds: LabeledDataset, test_fraction: float, seed: int = 0, stratified: bool = True
) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic random split; raises if a class vanishes from either side."""
    if not 0 < test_fraction < 1:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5B1])))
    test_mask = np.zeros(ds.n, dtype=bool)
    if stratified:
        for c in range(ds.n_classes):
            rows = np.flatnonzero(ds.y == c)
            k = int(round(test_fraction * rows.size))
            test_mask[rng.permutation(rows)[:k]] = True
    else:
        k = int(round(test_fraction * ds.n))
        test_mask[rng.permutation(ds.n)[:k]] = True
    train_rows, test_rows = np.flatnonzero(~test_mask), np.flatnonzero(test_mask)
    for side, rows in (("train", train_rows), ("test", test_rows)):
        present = set(ds.y[rows].tolist())
        if len(present) != ds.n_classes:
            missing = [ds.classes[c] for c in range(ds.n_classes) if c not in present]
            raise SplitError(f"{side} split has no samples of class(es) {missing}")
    return ds.subset(train_rows), ds.subset(test_rows)
