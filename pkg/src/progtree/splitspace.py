"""Sparse unit weight vectors, oblique splits and candidate split sets.

Projections are always accumulated coordinate by coordinate in the stored
(ascending feature index) order, starting from 0.0.  Fitting and prediction
share this accumulation, so a bias equal to a training projection routes that
training row identically at fit time and at predict time.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Dataset


class SplitSpaceError(ValueError):
    pass


def uniform_nonzero_values(rng: np.random.Generator, shape) -> np.ndarray:
    """Default magnitude/sign law: i.i.d. Uniform(-1, 1) with exact zeros redrawn."""
    vals = rng.uniform(-1.0, 1.0, size=shape)
    zero = vals == 0.0
    while np.any(zero):
        vals[zero] = rng.uniform(-1.0, 1.0, size=int(zero.sum()))
        zero = vals == 0.0
    return vals


ValueLaw = Callable[[np.random.Generator, tuple], np.ndarray]


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Sparse unit-L2 direction stored as sorted (index, value) pairs."""

    idx: np.ndarray
    val: np.ndarray
    p: int

    def __post_init__(self):
        idx = np.asarray(self.idx, dtype=np.int64).reshape(-1)
        val = np.asarray(self.val, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape or idx.size == 0:
            raise SplitSpaceError("weight vector needs matching, non-empty idx/val")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.p:
            raise SplitSpaceError("feature indices must be strictly increasing and < p")
        if np.any(val == 0.0) or not np.all(np.isfinite(val)):
            raise SplitSpaceError("stored values must be finite and nonzero")
        if abs(math.fsum(v * v for v in val) - 1.0) > 1e-12:
            raise SplitSpaceError("weight vector must have unit L2 norm")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "val", val)

    @property
    def nnz(self) -> int:
        return int(self.idx.size)

    @property
    def key(self) -> tuple:
        return (self.p, self.idx.tobytes(), self.val.tobytes())

    def __eq__(self, other):
        return isinstance(other, WeightVector) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def dense(self) -> np.ndarray:
        w = np.zeros(self.p)
        w[self.idx] = self.val
        return w

    def to_json(self) -> dict:
        return {"idx": [int(i) for i in self.idx], "val": [float(v) for v in self.val], "p": self.p}

    @classmethod
    def from_json(cls, obj, p=None) -> "WeightVector":
        return cls(np.asarray(obj["idx"]), np.asarray(obj["val"]), int(obj.get("p", p)))

    @classmethod
    def from_dense(cls, w) -> "WeightVector":
        w = np.asarray(w, dtype=np.float64)
        nz = np.flatnonzero(w)
        vals = w[nz] / np.linalg.norm(w[nz])
        return cls(nz, vals, w.shape[0])


@dataclass(frozen=True, eq=False)
class ObliqueSplit:
    """The pair (w, c); rows with w.x > c go right, the rest go left."""

    weight: WeightVector
    bias: float

    def __post_init__(self):
        b = float(self.bias)
        if not math.isfinite(b):
            raise SplitSpaceError("bias must be finite")
        object.__setattr__(self, "bias", b)

    @property
    def key(self) -> tuple:
        return (self.weight.key, self.bias)

    def __eq__(self, other):
        return isinstance(other, ObliqueSplit) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def goes_right(self, X) -> np.ndarray:
        return project_rows(self.weight, X) > self.bias

    def to_json(self) -> dict:
        d = self.weight.to_json()
        d["bias"] = self.bias
        return d

    @classmethod
    def from_json(cls, obj, p=None) -> "ObliqueSplit":
        return cls(WeightVector.from_json(obj, p), float(obj["bias"]))


# --------------------------------------------------------------------------
# projections


def project(weight: WeightVector, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != weight.p:
        raise SplitSpaceError(f"row length {x.shape[0]} != p={weight.p}")
    acc = 0.0
    for i, v in zip(weight.idx, weight.val):
        acc = acc + float(x[i]) * float(v)
    return acc


def project_rows(weight: WeightVector, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != weight.p:
        raise SplitSpaceError("dimension mismatch")
    acc = np.zeros(X.shape[0])
    for i, v in zip(weight.idx, weight.val):
        acc = acc + X[:, i] * v
    return acc


@dataclass
class WeightBatch:
    """D weight vectors packed as zero-padded (D, width) index/value arrays."""

    idx: np.ndarray
    val: np.ndarray
    nnz: np.ndarray
    p: int

    def __len__(self):
        return self.idx.shape[0]

    @classmethod
    def empty(cls, p):
        return cls(np.zeros((0, 1), np.int64), np.zeros((0, 1)), np.zeros(0, np.int64), p)

    @classmethod
    def from_vectors(cls, vectors: Sequence[WeightVector], p=None) -> "WeightBatch":
        if not vectors:
            return cls.empty(p if p is not None else 1)
        p = vectors[0].p
        width = max(v.nnz for v in vectors)
        idx = np.zeros((len(vectors), width), np.int64)
        val = np.zeros((len(vectors), width))
        nnz = np.zeros(len(vectors), np.int64)
        for d, v in enumerate(vectors):
            if v.p != p:
                raise SplitSpaceError("mixed dimensions in weight batch")
            idx[d, : v.nnz] = v.idx
            val[d, : v.nnz] = v.val
            nnz[d] = v.nnz
        return cls(idx, val, nnz, p)

    def vector(self, d) -> WeightVector:
        k = int(self.nnz[d])
        return WeightVector(self.idx[d, :k].copy(), self.val[d, :k].copy(), self.p)

    def vectors(self):
        return [self.vector(d) for d in range(len(self))]

    def take(self, rows) -> "WeightBatch":
        rows = np.asarray(rows, dtype=np.intp)
        return WeightBatch(self.idx[rows], self.val[rows], self.nnz[rows], self.p)

    def project(self, X) -> np.ndarray:
        """Projections as a (D, n) matrix, accumulated in stored coordinate order."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise SplitSpaceError("dimension mismatch")
        XT = np.ascontiguousarray(X.T)
        Z = np.zeros((len(self), X.shape[0]))
        for k in range(self.idx.shape[1]):
            Z += XT[self.idx[:, k]] * self.val[:, k, None]
        return Z


def sample_weight_batch(p: int, s: int, count: int, rng: np.random.Generator,
                        value_law: ValueLaw = uniform_nonzero_values) -> WeightBatch:
    """Draw ``count`` independent s-sparse unit vectors.

    Sparsity k ~ Uniform{1..s}; support uniform without replacement; values
    from ``value_law`` then L2-normalized.
    """
    if not 1 <= s <= p:
        raise SplitSpaceError(f"need 1 <= s <= p, got s={s}, p={p}")
    ks = rng.integers(1, s + 1, size=count)
    keys = rng.random((count, p))
    if s < p:
        sel = np.argpartition(keys, s - 1, axis=1)[:, :s]
    else:
        sel = np.tile(np.arange(p), (count, 1))
    # order the s smallest keys so the first k form a uniform k-subset
    order = np.argsort(np.take_along_axis(keys, sel, axis=1), axis=1)
    sel = np.take_along_axis(sel, order, axis=1)
    vals = np.asarray(value_law(rng, (count, s)), dtype=np.float64)
    live = np.arange(s)[None, :] < ks[:, None]
    idx = np.where(live, sel, p + 1)  # sentinel sorts dead slots last
    order = np.argsort(idx, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    vals = np.take_along_axis(np.where(live, vals, 0.0), order, axis=1)
    live = np.take_along_axis(live, order, axis=1)
    norms = np.sqrt(np.sum(vals * vals, axis=1))
    vals = vals / norms[:, None]
    idx = np.where(live, idx, 0)
    return WeightBatch(idx.astype(np.int64), vals, ks.astype(np.int64), p)


def sample_weight_vector(p: int, s: int, rng: np.random.Generator,
                         value_law: ValueLaw = uniform_nonzero_values) -> WeightVector:
    return sample_weight_batch(p, s, 1, rng, value_law).vector(0)


def lambda_set(weight: WeightVector, dataset: Dataset) -> list:
    """All distinct splits (w, w.X_i) over the sample, sorted by bias."""
    if weight.p != dataset.p:
        raise SplitSpaceError("weight dimension does not match dataset")
    z = np.unique(project_rows(weight, dataset.features))
    return [ObliqueSplit(weight, float(c)) for c in z]


# --------------------------------------------------------------------------
# candidate sets


class CandidateSet:
    """A finite split set: whole Lambda sets for some directions plus loose splits.

    ``full`` directions contribute every distinct sample projection of the
    bound dataset as a bias; ``extra`` holds individual splits (for example a
    previous tree's splits).  Iterating yields ObliqueSplit objects in the
    canonical order used by the fitter: full directions first (bias
    ascending within a direction), then extras in insertion order.
    """

    def __init__(self, dataset: Dataset, full: WeightBatch | None = None, extra=()):
        self.dataset = dataset
        self.full = full if full is not None else WeightBatch.empty(dataset.p)
        if len(self.full) and self.full.p != dataset.p:
            raise SplitSpaceError("candidate dimension does not match dataset")
        full_keys = {v.key for v in self.full.vectors()} if len(self.full) else set()
        seen = set()
        kept = []
        for sp in extra:
            if sp.weight.p != dataset.p:
                raise SplitSpaceError("candidate dimension does not match dataset")
            if sp.key in seen:
                continue
            if sp.weight.key in full_keys and sp.bias in self._full_biases(sp.weight):
                continue
            seen.add(sp.key)
            kept.append(sp)
        self.extra = tuple(kept)

    def _full_biases(self, weight):
        return set(np.unique(project_rows(weight, self.dataset.features)).tolist())

    @classmethod
    def from_splits(cls, dataset, splits):
        return cls(dataset, None, list(splits))

    def union(self, splits) -> "CandidateSet":
        return CandidateSet(self.dataset, self.full, list(self.extra) + list(splits))

    def __iter__(self):
        if len(self.full):
            Z = self.full.project(self.dataset.features)
            for d in range(len(self.full)):
                w = self.full.vector(d)
                for c in np.unique(Z[d]):
                    yield ObliqueSplit(w, float(c))
        yield from self.extra

    def __len__(self):
        total = len(self.extra)
        if len(self.full):
            Z = np.sort(self.full.project(self.dataset.features), axis=1)
            total += int(np.sum(Z[:, 1:] != Z[:, :-1])) + len(self.full)
        return total


class PoolMode(str, enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass
class CandidatePool:
    """Search space for refinement: B stored directions, or a fresh stream (B = inf)."""

    mode: PoolMode
    sparsity: int
    subset_size: int
    p: int
    weights: WeightBatch | None = None
    value_law: ValueLaw = field(default=uniform_nonzero_values, repr=False)

    def __post_init__(self):
        self.mode = PoolMode(self.mode)
        if self.subset_size < 1:
            raise SplitSpaceError("subset size #S must be >= 1")
        if not 1 <= self.sparsity <= self.p:
            raise SplitSpaceError("need 1 <= s <= p")
        if self.mode is PoolMode.FINITE:
            if self.weights is None or len(self.weights) == 0:
                raise SplitSpaceError("finite pool needs B >= 1 weight vectors")

    @property
    def B(self):
        return len(self.weights) if self.mode is PoolMode.FINITE else math.inf

    @classmethod
    def finite(cls, B, p, s, subset_size, rng, value_law=uniform_nonzero_values):
        if B < 1:
            raise SplitSpaceError("finite pool needs B >= 1")
        w = sample_weight_batch(p, s, B, rng, value_law)
        return cls(PoolMode.FINITE, s, subset_size, p, w, value_law)

    @classmethod
    def from_vectors(cls, vectors, s, subset_size):
        batch = WeightBatch.from_vectors(list(vectors))
        return cls(PoolMode.FINITE, s, subset_size, batch.p, batch)

    @classmethod
    def infinite(cls, p, s, subset_size, value_law=uniform_nonzero_values):
        return cls(PoolMode.INFINITE, s, subset_size, p, None, value_law)

    def to_json(self) -> dict:
        out = {"mode": self.mode.value, "sparsity": self.sparsity,
               "subset_size": self.subset_size, "p": self.p}
        if self.mode is PoolMode.FINITE:
            out["weights"] = [v.to_json() for v in self.weights.vectors()]
        return out

    @classmethod
    def from_json(cls, obj) -> "CandidatePool":
        mode = PoolMode(obj["mode"])
        weights = None
        if mode is PoolMode.FINITE:
            weights = WeightBatch.from_vectors(
                [WeightVector.from_json(w, obj["p"]) for w in obj["weights"]])
        return cls(mode, int(obj["sparsity"]), int(obj["subset_size"]), int(obj["p"]), weights)

    def full_candidates(self, dataset) -> CandidateSet:
        """Union of every stored Lambda set (the one-shot search space)."""
        if self.mode is not PoolMode.FINITE:
            raise SplitSpaceError("an infinite pool has no materialized union")
        return CandidateSet(dataset, self.weights)


def draw_iteration_candidates(pool: CandidatePool, dataset: Dataset,
                              rng: np.random.Generator) -> CandidateSet:
    """The fresh set W_l of one refinement step."""
    if dataset.p != pool.p:
        raise SplitSpaceError("pool dimension does not match dataset")
    if pool.mode is PoolMode.FINITE:
        B = len(pool.weights)
        pick = np.sort(rng.choice(B, size=min(pool.subset_size, B), replace=False))
        return CandidateSet(dataset, pool.weights.take(pick))
    batch = sample_weight_batch(pool.p, pool.sparsity, pool.subset_size, rng, pool.value_law)
    return CandidateSet(dataset, batch)
