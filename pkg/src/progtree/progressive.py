"""Progressive refinement: refit over (previous splits) + (fresh candidates), b times."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema
import numpy as np

from .data import Dataset
from .splitspace import CandidatePool, ObliqueSplit, draw_iteration_candidates
from .tree import FitConfig, ObliqueTree, extract_splits, fit_tree

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ProgressiveConfig:
    pool: CandidatePool
    iterations: int
    fit: FitConfig = field(default_factory=lambda: FitConfig.constrained(3, 10))
    seed: Optional[int] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations b must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    training_sse: float
    n_splits: int
    elapsed: float


@dataclass
class ProgressiveResult:
    final_tree: ObliqueTree
    split_set: list
    history: list
    seed: int
    pool: CandidatePool
    fit: FitConfig

    @property
    def iterations_done(self):
        return self.history[-1].iteration if self.history else 0


def iteration_stream(seed: int, l: int) -> np.random.Generator:
    """Independent generator for iteration ``l`` of the run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(l,)))


def _run(dataset, pool, fit, seed, start, stop, split_set, history, tree,
         callback, early_stop):
    cap = 2 ** fit.depth - 1
    for l in range(start + 1, stop + 1):
        t0 = time.perf_counter()
        rng = iteration_stream(seed, l)
        cands = draw_iteration_candidates(pool, dataset, rng).union(split_set)
        tree = fit_tree(dataset, cands, fit, rng)
        split_set = extract_splits(tree)
        if len(split_set) > cap:
            raise AssertionError(f"|S^({l})| = {len(split_set)} exceeds 2^H - 1 = {cap}")
        history.append(IterationRecord(l, tree.training_sse(dataset), len(split_set),
                                       time.perf_counter() - t0))
        if callback is not None:
            callback(l, tree)
        if early_stop is not None and early_stop(history):
            break
    return tree, split_set


def refine(dataset: Dataset, config: ProgressiveConfig, rng=None,
           callback: Callable | None = None,
           early_stop: Callable | None = None) -> ProgressiveResult:
    """Run ``config.iterations`` refinement steps starting from an empty split set.

    ``callback(l, tree)`` sees every iteration's tree.  ``early_stop(history)``
    returning True ends the run after the current iteration.
    """
    seed = config.seed
    if seed is None:
        seed = int(np.random.default_rng(rng).integers(2**63))
    history = []
    tree, splits = _run(dataset, config.pool, config.fit, seed, 0, config.iterations,
                        [], history, None, callback, early_stop)
    return ProgressiveResult(tree, splits, history, seed, config.pool, config.fit)


def iteration_budget(n, H, B, s, mode="continuous", d_min=1.0) -> int:
    """Advisory lower bound on #S * b for the progressive tree to match the one-shot tree."""
    if min(n, H, B, s) <= 0:
        raise ValueError("n, H, B and s must be positive")
    m = 2.0**H * B
    if mode == "continuous":
        return math.ceil(n * m * math.log(m))
    if mode == "discrete":
        if not 0.0 < d_min <= 1.0:
            raise ValueError("d_min must lie in (0, 1]")
        return math.ceil(2.0 ** (H + s + 1) * B * math.log(m) / d_min)
    raise ValueError(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# checkpoint / resume

_SPLIT_SCHEMA = {
    "type": "object",
    "required": ["idx", "val", "bias"],
    "properties": {
        "idx": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "val": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "bias": {"type": "number"},
    },
}

CHECKPOINT_SCHEMA = {
    "type": "object",
    "required": ["version", "l", "seed", "pool", "splits", "fit", "history", "tree", "digest"],
    "properties": {
        "version": {"const": CHECKPOINT_VERSION},
        "l": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "pool": {"type": "object", "required": ["mode", "sparsity", "subset_size", "p"]},
        "splits": {"type": "array", "items": _SPLIT_SCHEMA},
        "fit": {"type": "object"},
        "history": {"type": "array"},
        "tree": {"type": ["object", "null"]},
        "digest": {"type": "string"},
    },
}


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def checkpoint(result: ProgressiveResult) -> dict:
    state = {
        "version": CHECKPOINT_VERSION,
        "l": result.iterations_done,
        "seed": int(result.seed),
        "pool": result.pool.to_json(),
        "splits": [sp.to_json() for sp in result.split_set],
        "fit": result.fit.to_json(),
        "history": [vars(r) for r in result.history],
        "tree": result.final_tree.to_json() if result.final_tree is not None else None,
    }
    state["digest"] = _digest({k: state[k] for k in ("l", "seed", "pool", "splits", "fit", "tree")})
    return state


def _load_state(state):
    if isinstance(state, (str, bytes)):
        state = json.loads(state)
    try:
        jsonschema.validate(state, CHECKPOINT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CheckpointError(f"invalid checkpoint: {exc.message}") from None
    body = {k: state[k] for k in ("l", "seed", "pool", "splits", "fit", "tree")}
    if _digest(body) != state["digest"]:
        raise CheckpointError("checkpoint content does not match its digest")
    try:
        pool = CandidatePool.from_json(state["pool"])
        fit = FitConfig.from_json(state["fit"])
        splits = [ObliqueSplit.from_json(s, pool.p) for s in state["splits"]]
        tree = ObliqueTree.from_json(state["tree"]) if state["tree"] is not None else None
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"invalid checkpoint: {exc}") from None
    history = [IterationRecord(**r) for r in state["history"]]
    return pool, fit, splits, tree, history, int(state["seed"]), int(state["l"])


def resume(state, dataset: Dataset, extra_iterations: int, callback=None,
           early_stop=None) -> ProgressiveResult:
    """Continue a checkpointed run; replays exactly as an uninterrupted run would."""
    if extra_iterations < 0:
        raise ValueError("extra_iterations must be >= 0")
    pool, fit, splits, tree, history, seed, l = _load_state(state)
    if pool.p != dataset.p:
        raise CheckpointError("checkpoint dimension does not match dataset")
    tree, splits = _run(dataset, pool, fit, seed, l, l + extra_iterations, splits, history,
                        tree, callback, early_stop)
    return ProgressiveResult(tree, splits, history, seed, pool, fit)
