"""Greedy oblique regression trees over an explicit candidate split set."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .splitspace import CandidateSet, ObliqueSplit, WeightBatch, project_rows

TREE_FORMAT = "progtree.oblique_tree"
TREE_VERSION = 1


class TreeError(ValueError):
    pass


@dataclass
class FitConfig:
    """Depth and stopping rules.

    ``strict=True`` follows the bare recursion: every node (empty ones
    included) is split at every level and the minima are ignored.
    """

    depth: int = 3
    min_samples_leaf: int = 0
    min_samples_split: int = 0
    strict: bool = True
    tie_epsilon: float = 1e-12
    min_impurity_decrease: float = 0.0

    def __post_init__(self):
        if self.depth < 1:
            raise TreeError("depth H must be >= 1")
        if min(self.min_samples_leaf, self.min_samples_split) < 0:
            raise TreeError("minima must be >= 0")
        if self.tie_epsilon < 0 or self.min_impurity_decrease < 0:
            raise TreeError("tie_epsilon and min_impurity_decrease must be >= 0")

    @classmethod
    def constrained(cls, depth=3, minimum=10, **kw):
        return cls(depth=depth, min_samples_leaf=minimum, min_samples_split=minimum,
                   strict=False, **kw)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class TreeNode:
    rows: np.ndarray
    depth: int
    leaf_value: float = 0.0
    split: Optional[ObliqueSplit] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    loss: float = 0.0
    heap: int = 1
    n_rows: Optional[int] = None  # set when loaded from JSON, where rows are not kept

    @property
    def is_leaf(self):
        return self.split is None


def split_loss(dataset: Dataset, node_rows, split: ObliqueSplit):
    """Least-squares loss of one split on one node: (loss, beta_right, beta_left).

    Each side is fitted by its mean; an empty side gets coefficient 0.
    """
    rows = np.asarray(node_rows, dtype=np.intp)
    if rows.size == 0:
        return 0.0, 0.0, 0.0
    y = dataset.targets[rows]
    right = split.goes_right(dataset.features[rows])
    yr, yl = y[right], y[~right]
    br = float(yr.mean()) if yr.size else 0.0
    bl = float(yl.mean()) if yl.size else 0.0
    loss = float(np.sum((yr - br) ** 2) + np.sum((yl - bl) ** 2))
    return loss, br, bl


class _Scan:
    """Per-fit precomputation that scores every candidate on any node at once.

    For each whole-Lambda direction the sample is sorted once by projection;
    a node is then scored with masked cumulative sums read off at the last
    position of every run of equal projections (the distinct biases).
    """

    def __init__(self, candidates: CandidateSet):
        ds = candidates.dataset
        self.X = ds.features
        self.y = ds.targets
        n = ds.n
        self.full = candidates.full
        self.n_full = 0
        if len(self.full):
            Z = self.full.project(self.X)
            order = np.argsort(Z, axis=1, kind="stable")
            zs = np.take_along_axis(Z, order, axis=1)
            ends = np.ones(zs.shape, dtype=bool)
            ends[:, :-1] = zs[:, 1:] != zs[:, :-1]
            self.end_pos = np.flatnonzero(ends)
            self.full_bias = zs.ravel()[self.end_pos]
            self.full_dir = self.end_pos // n
            self.last_pos = np.arange(1, len(self.full) + 1) * n - 1
            self.order = order
            self.y_sorted = self.y[order]
            self.Z = Z
            self.n_full = self.end_pos.size
        self.extra = candidates.extra
        if self.extra:
            batch = WeightBatch.from_vectors([sp.weight for sp in self.extra])
            self.ZE = batch.project(self.X)
            self.ebias = np.array([sp.bias for sp in self.extra])
            self.left_extra = self.ZE <= self.ebias[:, None]
        self.size = self.n_full + len(self.extra)
        if self.size == 0:
            raise TreeError("candidate set is empty")

    def node_losses(self, rows):
        """(loss, n_left, n_right, node_sse) for every candidate on ``rows``."""
        m = rows.size
        if m == 0:
            z = np.zeros(self.size)
            return z, z.copy(), z.copy(), 0.0
        mu = self.y[rows].mean()
        yc_node = self.y[rows] - mu
        node_sse = float(yc_node @ yc_node)
        parts_loss, parts_nl = [], []
        if self.n_full:
            mask = np.zeros(self.y.shape[0])
            mask[rows] = 1.0
            w = mask[self.order]
            a = (self.y_sorted - mu) * w
            cnt = np.cumsum(w, axis=1).ravel()
            s1a = np.cumsum(a, axis=1).ravel()
            s2a = np.cumsum(a * a, axis=1).ravel()
            nl = cnt[self.end_pos]
            s1 = s1a[self.end_pos]
            s2 = s2a[self.end_pos]
            s1t = s1a[self.last_pos][self.full_dir]
            s2t = s2a[self.last_pos][self.full_dir]
            parts_loss.append(_two_sided_sse(nl, s1, s2, m - nl, s1t - s1, s2t - s2))
            parts_nl.append(nl)
        if self.extra:
            L = self.left_extra[:, rows].astype(np.float64)
            nl = L.sum(axis=1)
            s1 = L @ yc_node
            s2 = L @ (yc_node * yc_node)
            s1t = yc_node.sum()
            parts_loss.append(_two_sided_sse(nl, s1, s2, m - nl, s1t - s1, node_sse - s2))
            parts_nl.append(nl)
        loss = np.concatenate(parts_loss)
        nl = np.concatenate(parts_nl)
        return loss, nl, m - nl, node_sse

    def split_at(self, k) -> ObliqueSplit:
        if k < self.n_full:
            return ObliqueSplit(self.full.vector(int(self.full_dir[k])), float(self.full_bias[k]))
        return self.extra[k - self.n_full]

    def goes_right(self, k, rows):
        if k < self.n_full:
            return self.Z[self.full_dir[k], rows] > self.full_bias[k]
        j = k - self.n_full
        return self.ZE[j, rows] > self.ebias[j]


def _two_sided_sse(nl, s1l, s2l, nr, s1r, s2r):
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(nl > 0, s2l - s1l * s1l / np.where(nl > 0, nl, 1.0), 0.0)
        right = np.where(nr > 0, s2r - s1r * s1r / np.where(nr > 0, nr, 1.0), 0.0)
    return np.maximum(left, 0.0) + np.maximum(right, 0.0)


def select_tied(losses, valid, node_sse, config: FitConfig, rng):
    """Uniform draw from the epsilon-argmin set; None when nothing is valid.

    Ties are losses within ``tie_epsilon`` of the minimum, relative to the
    node's own sum of squares.  Indices are scanned in canonical order so the
    draw depends only on the seed.
    """
    if not np.any(valid):
        return None
    lv = np.where(valid, losses, np.inf)
    best = float(lv.min())
    tol = config.tie_epsilon * max(node_sse, abs(best))
    tied = np.flatnonzero(lv <= best + tol)
    k = int(tied[rng.integers(tied.size)])
    return k, float(losses[k])


def _node_choice(scan: _Scan, rows, config: FitConfig, rng, n_total):
    if not config.strict and rows.size < max(config.min_samples_split, 2):
        return None
    loss, nl, nr, node_sse = scan.node_losses(rows)
    if config.strict:
        valid = np.ones(loss.shape, dtype=bool)
    else:
        msl = max(config.min_samples_leaf, 1)
        valid = (nl >= msl) & (nr >= msl)
    pick = select_tied(loss, valid, node_sse, config, rng)
    if pick is None:
        return None
    k, best = pick
    if not config.strict and (node_sse - best) / n_total < config.min_impurity_decrease:
        return None
    return k, best


def best_split(dataset: Dataset, node_rows, candidates, config: FitConfig, rng):
    """Return (split, loss) minimizing the node loss, or None when the node stays a leaf."""
    scan = candidates if isinstance(candidates, _Scan) else _Scan(_as_candidates(dataset, candidates))
    rows = np.asarray(node_rows, dtype=np.intp)
    out = _node_choice(scan, rows, config, rng, dataset.n)
    if out is None:
        return None
    k, loss = out
    return scan.split_at(k), loss


def _as_candidates(dataset, candidates) -> CandidateSet:
    if isinstance(candidates, CandidateSet):
        if candidates.dataset is not dataset and candidates.dataset.n != dataset.n:
            raise TreeError("candidate set was built for another dataset")
        return candidates
    return CandidateSet.from_splits(dataset, list(candidates))


def _mean(y):
    return float(y.mean()) if y.size else 0.0


def grow(dataset: Dataset, config: FitConfig, choose) -> "ObliqueTree":
    """Breadth-first growth; ``choose(node) -> (split, right_mask, loss) | None``."""
    y = dataset.targets
    root = TreeNode(np.arange(dataset.n), 0, _mean(y))
    levels = [[root]]
    for h in range(config.depth):
        nxt = []
        for node in levels[h]:
            res = choose(node)
            if res is None:
                continue
            split, right, loss = res
            node.split = split
            node.loss = loss
            r_rows, l_rows = node.rows[right], node.rows[~right]
            node.left = TreeNode(l_rows, h + 1, _mean(y[l_rows]), heap=2 * node.heap)
            node.right = TreeNode(r_rows, h + 1, _mean(y[r_rows]), heap=2 * node.heap + 1)
            nxt += [node.left, node.right]
        if not nxt:
            break
        levels.append(nxt)
    return ObliqueTree(root, config.depth, levels, config, dataset.p)


def fit_tree(dataset: Dataset, candidates, config: FitConfig, rng) -> "ObliqueTree":
    """Greedy depth-H fit where every node searches the same candidate set."""
    scan = _Scan(_as_candidates(dataset, candidates))

    def choose(node):
        out = _node_choice(scan, node.rows, config, rng, dataset.n)
        if out is None:
            return None
        k, loss = out
        return scan.split_at(k), scan.goes_right(k, node.rows), loss

    return grow(dataset, config, choose)


class ObliqueTree:
    def __init__(self, root: TreeNode, depth: int, levels, config: FitConfig, p: int):
        self.root = root
        self.depth = depth
        self.levels = levels
        self.config = config
        self.p = p

    def nodes(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack += [node.right, node.left]
        return out

    def leaves(self):
        return [nd for nd in self.nodes() if nd.is_leaf]

    @property
    def n_leaves(self):
        return len(self.leaves())

    @property
    def n_internal(self):
        return sum(1 for nd in self.nodes() if not nd.is_leaf)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.p:
            raise TreeError(f"expected {self.p} features, got {X.shape[1]}")
        out = np.empty(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.leaf_value
                continue
            right = project_rows(node.split.weight, X[idx]) > node.split.bias
            stack.append((node.right, idx[right]))
            stack.append((node.left, idx[~right]))
        return out[0] if single else out

    def training_sse(self, dataset: Dataset) -> float:
        r = dataset.targets - self.predict(dataset.features)
        return float(r @ r)

    def level_partitions(self, X):
        """Per depth 1..H: sorted list of row-index tuples, one per node."""
        X = np.asarray(X, dtype=np.float64)
        parts = [[] for _ in range(self.depth + 1)]
        frontier = [(self.root, np.arange(X.shape[0]))]
        while frontier:
            nxt = []
            for node, idx in frontier:
                parts[node.depth].append(tuple(idx.tolist()))
                if not node.is_leaf:
                    right = project_rows(node.split.weight, X[idx]) > node.split.bias
                    nxt += [(node.left, idx[~right]), (node.right, idx[right])]
            frontier = nxt
        return [sorted(p) for p in parts[1:]]

    def to_json(self) -> dict:
        def enc(node):
            n = node.n_rows if node.n_rows is not None else int(node.rows.size)
            d = {"value": node.leaf_value, "n": n}
            if not node.is_leaf:
                d["split"] = node.split.to_json()
                d["loss"] = node.loss
                d["left"] = enc(node.left)
                d["right"] = enc(node.right)
            return d

        return {"format": TREE_FORMAT, "version": TREE_VERSION, "p": self.p,
                "depth": self.depth, "config": self.config.to_json(), "root": enc(self.root)}

    @classmethod
    def from_json(cls, obj) -> "ObliqueTree":
        if obj.get("format") != TREE_FORMAT or obj.get("version") != TREE_VERSION:
            raise TreeError("unsupported tree format or version")
        p = int(obj["p"])

        def dec(d, depth):
            node = TreeNode(np.zeros(0, np.intp), depth, float(d["value"]), n_rows=int(d.get("n", 0)))
            if "split" in d:
                node.split = ObliqueSplit.from_json(d["split"], p)
                node.loss = float(d.get("loss", 0.0))
                node.left = dec(d["left"], depth + 1)
                node.right = dec(d["right"], depth + 1)
            return node

        root = dec(obj["root"], 0)
        levels, frontier = [], [root]
        while frontier:
            levels.append(frontier)
            frontier = [c for nd in frontier if not nd.is_leaf for c in (nd.left, nd.right)]
        return cls(root, int(obj["depth"]), levels, FitConfig.from_json(obj["config"]), p)


def extract_splits(tree: ObliqueTree) -> list:
    """Distinct splits in breadth-first, left-to-right order."""
    seen, out = set(), []
    for level in tree.levels:
        for node in level:
            if node.is_leaf or node.split.key in seen:
                continue
            seen.add(node.split.key)
            out.append(node.split)
    return out


def sample_equivalent(tree_a: ObliqueTree, tree_b: ObliqueTree, dataset: Dataset) -> bool:
    """Level-wise equality of the multisets of training-row sets."""
    if tree_a.depth != tree_b.depth:
        raise TreeError("trees must have equal depth")
    X = dataset.features
    return tree_a.level_partitions(X) == tree_b.level_partitions(X)
