"""Orthogonal Random Forests, Breiman oblique trees, Forest-RC and RF+S.

Every member tree owns a seed stream spawned from the caller's generator, and
ensemble predictions are reduced in tree-index order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .data import Dataset
from .splitspace import CandidateSet, ObliqueSplit, project_rows, sample_weight_batch
from .tree import FitConfig, ObliqueTree, _Scan, grow, select_tied

FOREST_FORMAT = "progtree.forest"
FOREST_VERSION = 1
# directions scored per block when a Breiman node samples many of them
_BREIMAN_BLOCK = 2048


@dataclass
class RfParams:
    n_estimators: int = 100
    gamma: float = 1.0
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    min_impurity_decrease: float = 0.0
    max_depth: Optional[int] = None
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if min(self.min_samples_split, self.min_samples_leaf) < 0 or self.min_impurity_decrease < 0:
            raise ValueError("minima must be >= 0")

    def n_features(self, width):
        return max(1, math.ceil(self.gamma * width))

    def to_json(self):
        return asdict(self)


@dataclass
class FrcParams(RfParams):
    feature_combinations: int = 5
    max_features: int = 1000

    def __post_init__(self):
        super().__post_init__()
        if self.feature_combinations < 1 or self.max_features < 1:
            raise ValueError("feature_combinations and max_features must be >= 1")


def params_from_dict(cls, d):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in d.items() if k in names})


def tree_streams(rng, count):
    """One independent generator per member tree."""
    root = np.random.SeedSequence(int(np.random.default_rng(rng).integers(2**63)))
    return [np.random.default_rng(s) for s in root.spawn(count)]


def _resample(n, bootstrap, rng):
    if bootstrap:
        return rng.integers(0, n, size=n)
    return np.arange(n)


# --------------------------------------------------------------------------
# orthogonal CART


class OrthogonalTree:
    """Axis-aligned regression tree in flat arrays; x[f] <= threshold goes left."""

    def __init__(self, feature, threshold, left, right, value, n_candidates=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_candidates = n_candidates

    @property
    def n_nodes(self):
        return self.value.size

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        rows = np.arange(X.shape[0])
        while np.any(active):
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_json(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


def _best_axis_split(Z, y, min_leaf):
    """Best (row, position, loss) over thresholds between sorted distinct values.

    ``Z`` is (k, m): candidate features by node rows.
    """
    k, m = Z.shape
    order = np.argsort(Z, axis=1, kind="stable")
    zs = np.take_along_axis(Z, order, axis=1)
    yc = y - y.mean()
    ys = yc[order]
    s1 = np.cumsum(ys, axis=1)[:, :-1]
    s2 = np.cumsum(ys * ys, axis=1)[:, :-1]
    t1 = yc.sum()
    t2 = float(yc @ yc)
    nl = np.arange(1, m, dtype=np.float64)
    nr = m - nl
    valid = zs[:, :-1] < zs[:, 1:]
    valid &= (nl >= min_leaf) & (nr >= min_leaf)
    if not np.any(valid):
        return None
    loss = (s2 - s1 * s1 / nl) + ((t2 - s2) - (t1 - s1) ** 2 / nr)
    loss = np.where(valid, loss, np.inf)
    flat = int(np.argmin(loss))
    f, j = divmod(flat, m - 1)
    lo, hi = zs[f, j], zs[f, j + 1]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return f, thr, float(loss[f, j]), t2


def fit_orthogonal_tree(X, y, params: RfParams, rng, n_total=None) -> OrthogonalTree:
    n, width = X.shape
    n_total = n_total or n
    k = params.n_features(width)
    min_leaf = max(params.min_samples_leaf, 1)
    min_split = max(params.min_samples_split, 2)
    max_depth = params.max_depth if params.max_depth is not None else np.inf
    feature, threshold, left, right, value, ncand = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        ncand.append(0)
        return len(value) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        nid, rows, depth = stack.pop()
        yr = y[rows]
        if depth >= max_depth or rows.size < min_split or np.ptp(yr) == 0:
            continue
        feats = rng.choice(width, size=k, replace=False)
        ncand[nid] = feats.size
        res = _best_axis_split(X[np.ix_(rows, feats)].T, yr, min_leaf)
        if res is None:
            continue
        f, thr, loss, node_sse = res
        if (node_sse - loss) / n_total < params.min_impurity_decrease:
            continue
        go_left = X[rows, feats[f]] <= thr
        feature[nid] = int(feats[f])
        threshold[nid] = thr
        lrows, rrows = rows[go_left], rows[~go_left]
        lid = new_node(lrows)
        rid = new_node(rrows)
        left[nid], right[nid] = lid, rid
        stack.append((rid, rrows, depth + 1))
        stack.append((lid, lrows, depth + 1))
    return OrthogonalTree(feature, threshold, left, right, value, np.asarray(ncand))


class Forest:
    """Bagged ensemble; prediction is the mean of member predictions."""

    def __init__(self, trees, params, kind, width):
        self.trees = list(trees)
        self.params = params
        self.kind = kind
        self.width = width

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.width:
            raise ValueError(f"expected {self.width} features, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def to_json(self):
        return {"format": FOREST_FORMAT, "version": FOREST_VERSION, "kind": self.kind,
                "width": self.width, "params": self.params.to_json(),
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, d):
        if d.get("format") != FOREST_FORMAT or d.get("version") != FOREST_VERSION:
            raise ValueError("unsupported forest format or version")
        if d["kind"] == "rf":
            params = params_from_dict(RfParams, d["params"])
            trees = [OrthogonalTree.from_json(t) for t in d["trees"]]
        else:
            params = params_from_dict(FrcParams, d["params"])
            trees = [ObliqueTree.from_json(t) for t in d["trees"]]
        return cls(trees, params, d["kind"], int(d["width"]))


def fit_random_forest(dataset: Dataset, params: RfParams, rng) -> Forest:
    X, y = dataset.features, dataset.targets
    trees = []
    for trng in tree_streams(rng, params.n_estimators):
        rows = _resample(dataset.n, params.bootstrap, trng)
        trees.append(fit_orthogonal_tree(X[rows], y[rows], params, trng))
    return Forest(trees, params, "rf", dataset.p)


# --------------------------------------------------------------------------
# augmentation and RF+S


def augment_features(dataset: Dataset, split_set, h: int) -> Dataset:
    """Append w_k.x for the first min(2^h - 1, |S|) splits; thresholds are dropped."""
    if h < 0:
        raise ValueError("h must be >= 0")
    X = _augment_matrix(dataset.features, split_set, h)
    names = list(dataset.feature_names) + [f"proj{k}" for k in range(X.shape[1] - dataset.p)]
    return dataset.with_features(X, names)


def _augment_matrix(X, split_set, h):
    X = np.asarray(X, dtype=np.float64)
    use = list(split_set)[: min(2**h - 1, len(split_set))]
    if not use:
        return X
    cols = []
    for sp in use:
        if sp.weight.p != X.shape[1]:
            raise ValueError("split weight dimension does not match the data")
        cols.append(project_rows(sp.weight, X))
    return np.column_stack([X] + cols)


class RfPlusSModel:
    def __init__(self, split_set, h, forest: Forest, p: int):
        self.split_set = list(split_set)
        self.h = h
        self.forest = forest
        self.p = p

    @property
    def width(self):
        return self.p + min(2**self.h - 1, len(self.split_set))

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} features, got {X.shape[1]}")
        return self.forest.predict(_augment_matrix(X, self.split_set, self.h))

    def to_json(self):
        return {"format": "progtree.rf_plus_s", "version": 1, "p": self.p, "h": self.h,
                "split_set": [sp.to_json() for sp in self.split_set],
                "forest": self.forest.to_json()}

    @classmethod
    def from_json(cls, d):
        splits = [ObliqueSplit.from_json(s, d["p"]) for s in d["split_set"]]
        return cls(splits, int(d["h"]), Forest.from_json(d["forest"]), int(d["p"]))


def fit_rf_plus_s(dataset: Dataset, split_set, params: RfParams, h: int, rng) -> RfPlusSModel:
    aug = augment_features(dataset, split_set, h)
    return RfPlusSModel(split_set, h, fit_random_forest(aug, params, rng), dataset.p)


# --------------------------------------------------------------------------
# Breiman oblique trees and Forest-RC


def node_stream(tree_seed: int, heap: int) -> np.random.Generator:
    """Generator of the node at heap position ``heap`` (root = 1)."""
    return np.random.default_rng(np.random.SeedSequence(tree_seed, spawn_key=(heap,)))


def breiman_node_candidates(dataset: Dataset, rows, B, s, tree_seed, heap):
    """The node's fresh directions and its generator (for replay in isolation)."""
    rng = node_stream(tree_seed, heap)
    return sample_weight_batch(dataset.p, s, B, rng), rng


def fit_breiman_tree(dataset: Dataset, B: int, s: int, fit_config: FitConfig, rng) -> ObliqueTree:
    """Greedy oblique tree that samples B fresh directions at every node.

    Candidate biases are the node rows' own projections.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    tree_seed = int(np.random.default_rng(rng).integers(2**63))
    n_total = dataset.n

    def choose(node):
        rows = node.rows
        if rows.size == 0 or (not fit_config.strict
                              and rows.size < max(fit_config.min_samples_split, 2)):
            return None
        batch, nrng = breiman_node_candidates(dataset, rows, B, s, tree_seed, node.heap)
        sub = dataset.subset(rows)
        local = np.arange(rows.size)
        scans, losses, nls = [], [], []
        for start in range(0, B, _BREIMAN_BLOCK):
            scan = _Scan(CandidateSet(sub, batch.take(np.arange(start, min(B, start + _BREIMAN_BLOCK)))))
            loss, nl, _, node_sse = scan.node_losses(local)
            scans.append(scan)
            losses.append(loss)
            nls.append(nl)
        loss = np.concatenate(losses)
        nl = np.concatenate(nls)
        nr = rows.size - nl
        if fit_config.strict:
            valid = np.ones(loss.shape, dtype=bool)
        else:
            msl = max(fit_config.min_samples_leaf, 1)
            valid = (nl >= msl) & (nr >= msl)
        pick = select_tied(loss, valid, node_sse, fit_config, nrng)
        if pick is None:
            return None
        k, best = pick
        if not fit_config.strict and (node_sse - best) / n_total < fit_config.min_impurity_decrease:
            return None
        for scan in scans:
            if k < scan.size:
                return scan.split_at(k), scan.goes_right(k, local), best
            k -= scan.size
        raise AssertionError("selected index out of range")

    return grow(dataset, fit_config, choose)


def frc_fit_config(params: FrcParams) -> FitConfig:
    depth = params.max_depth if params.max_depth is not None else 2**31
    return FitConfig(depth=depth, min_samples_leaf=params.min_samples_leaf,
                     min_samples_split=params.min_samples_split, strict=False,
                     min_impurity_decrease=params.min_impurity_decrease)


def fit_forest_rc(dataset: Dataset, params: FrcParams, rng) -> Forest:
    cfg = frc_fit_config(params)
    s = min(params.feature_combinations, dataset.p)
    trees = []
    for trng in tree_streams(rng, params.n_estimators):
        rows = _resample(dataset.n, params.bootstrap, trng)
        trees.append(fit_breiman_tree(dataset.subset(rows), params.max_features, s, cfg, trng))
    return Forest(trees, params, "frc", dataset.p)


def predict_ensemble(model, x):
    """Mean member prediction for one row or a batch, augmenting first when needed."""
    x = np.asarray(x, dtype=np.float64)
    out = model.predict(np.atleast_2d(x))
    return float(out[0]) if x.ndim == 1 else out
