"""Datasets, CSV ingestion, unit-cube normalization and train/validation splits."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FeatureMode(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class DataError(ValueError):
    pass


def _is_binary(features):
    return bool(np.all((features == 0.0) | (features == 1.0)))


class Dataset:
    """Immutable n x p feature matrix with a length-n target vector.

    ``feature_mode`` is inferred when not given: Binary iff every feature
    value is exactly 0 or 1.
    """

    def __init__(self, features, targets, feature_mode=None, feature_names=None):
        X = np.array(features, dtype=np.float64, copy=True)
        y = np.array(targets, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DataError(f"targets length {y.shape[0]} != n={n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("features and targets must be finite")
        binary = _is_binary(X)
        if feature_mode is None:
            feature_mode = FeatureMode.BINARY if binary else FeatureMode.CONTINUOUS
        feature_mode = FeatureMode(feature_mode)
        if feature_mode is FeatureMode.BINARY and not binary:
            raise DataError("binary mode requires every feature value in {0, 1}")
        X.setflags(write=False)
        y.setflags(write=False)
        self._X = X
        self._y = y
        self.feature_mode = feature_mode
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(p)]
        if len(feature_names) != p:
            raise DataError("feature_names length must equal p")
        self.feature_names = tuple(feature_names)

    @property
    def features(self) -> np.ndarray:
        return self._X

    @property
    def targets(self) -> np.ndarray:
        return self._y

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def p(self) -> int:
        return self._X.shape[1]

    def in_unit_cube(self) -> bool:
        return bool(np.all((self._X >= 0.0) & (self._X <= 1.0)))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self._X[rows], self._y[rows], feature_names=self.feature_names)

    def with_features(self, features, feature_names=None) -> "Dataset":
        return Dataset(features, self._y, feature_names=feature_names)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, mode={self.feature_mode.value})"


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    val_indices: np.ndarray


def load_csv(path, target_column=None) -> Dataset:
    """Read a headered, comma-separated numeric file.

    The target is ``target_column`` (by name) or the last column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)), dtype=np.float64)
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {r + 2}, column {header[c]}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite cell at row {r + 2}, column {header[c]}")
            values[r, c] = v
    if target_column is None:
        t = len(header) - 1
    else:
        try:
            t = header.index(target_column)
        except ValueError:
            raise DataError(f"{path}: no column named {target_column!r}") from None
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise DataError(f"{path}: no feature columns")
    return Dataset(values[:, keep], values[:, t], feature_names=[header[j] for j in keep])


def save_csv(dataset: Dataset, path, target_name="y"):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(dataset.feature_names) + [target_name])
        for x, y in zip(dataset.features, dataset.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class MinMaxRecord:
    mins: np.ndarray
    maxs: np.ndarray

    def apply(self, dataset: Dataset, clamp=True) -> Dataset:
        """Map features with these (min, max) pairs; constant columns map to 0."""
        X = dataset.features
        if X.shape[1] != self.mins.shape[0]:
            raise DataError("dimension mismatch with normalization record")
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        Z = np.where(span > 0, (X - self.mins) / safe, 0.0)
        if clamp:
            Z = np.clip(Z, 0.0, 1.0)
        return dataset.with_features(Z, dataset.feature_names)

    def invert(self, dataset: Dataset) -> Dataset:
        X = dataset.features
        return dataset.with_features(self.mins + X * (self.maxs - self.mins), dataset.feature_names)

    def to_json(self) -> dict:
        return {"mins": [float(v) for v in self.mins], "maxs": [float(v) for v in self.maxs]}

    @classmethod
    def from_json(cls, obj) -> "MinMaxRecord":
        if isinstance(obj, str):
            obj = json.loads(obj)
        mins = np.asarray(obj["mins"], dtype=np.float64)
        maxs = np.asarray(obj["maxs"], dtype=np.float64)
        if mins.shape != maxs.shape or np.any(maxs < mins):
            raise DataError("malformed normalization record")
        return cls(mins, maxs)


def minmax_normalize(dataset: Dataset):
    X = dataset.features
    record = MinMaxRecord(X.min(axis=0).copy(), X.max(axis=0).copy())
    return record.apply(dataset, clamp=True), record


def train_val_split(dataset_or_n, train_fraction=0.8, rng=None) -> SplitPlan:
    """Uniform random partition with ``ceil(train_fraction * n)`` training rows."""
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else dataset_or_n.n
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie in (0, 1)")
    n_train = math.ceil(round(train_fraction * n, 9))
    if n < 2 or n_train < 1 or n_train >= n:
        raise DataError(f"n={n} too small for a {train_fraction} split with both parts non-empty")
    rng = np.random.default_rng(rng)
    perm = rng.permutation(n)
    return SplitPlan(np.sort(perm[:n_train]), np.sort(perm[n_train:]))
