"""Uniform random search with a fixed train/validation split, then a pooled refit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .data import Dataset, train_val_split


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty IntRange({self.lo}, {self.hi})")

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def contains(self, v):
        return isinstance(v, (int, np.integer)) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class RealUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty RealUniform({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, v):
        return self.lo <= v <= self.hi


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("Choice needs at least one value")

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]

    def contains(self, v):
        return v in self.values


class ParamSpace:
    """Named dimensions sampled independently, in declaration order."""

    def __init__(self, dims: dict):
        if not dims:
            raise ValueError("parameter space has no dimensions")
        self.dims = dict(dims)

    def sample(self, rng) -> dict:
        return {name: dim.sample(rng) for name, dim in self.dims.items()}

    def contains(self, params) -> bool:
        return all(name in params and dim.contains(params[name]) for name, dim in self.dims.items())

    def extended(self, **extra) -> "ParamSpace":
        return ParamSpace({**self.dims, **extra})

    @classmethod
    def from_json(cls, obj) -> "ParamSpace":
        """``{"name": {"int": [lo, hi]} | {"real": [lo, hi]} | {"choice": [...]}}``"""
        dims = {}
        for name, spec in obj.items():
            if "int" in spec:
                dims[name] = IntRange(*spec["int"])
            elif "real" in spec:
                dims[name] = RealUniform(*spec["real"])
            elif "choice" in spec:
                dims[name] = Choice(tuple(spec["choice"]))
            else:
                raise ValueError(f"dimension {name!r}: unknown kind {sorted(spec)}")
        return cls(dims)


@dataclass
class TuneReport:
    best_params: dict
    best_val_score: float
    trials: list = field(default_factory=list)
    rounds: int = 0

    def to_json(self):
        return {"best_params": self.best_params, "best_val_score": self.best_val_score,
                "rounds": self.rounds,
                "trials": [{"params": p, "score": s} for p, s in self.trials]}


def random_search(dataset: Dataset, space: ParamSpace, R: int,
                  model_builder: Callable[[Dataset, dict, Any], Any],
                  metric: Callable, rng, train_fraction=0.8, plan=None) -> TuneReport:
    """Sample R configurations, fit each on one fixed split, keep the best by ``metric``.

    ``model_builder(train, params, rng)`` returns an object with ``predict``;
    ``metric(predictions, targets)`` is maximized.  Ties keep the earliest trial.
    A given ``plan`` replaces the seeded split.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    root = np.random.SeedSequence(int(np.random.default_rng(rng).integers(2**63)))
    split_seq, sample_seq, *trial_seqs = root.spawn(R + 2)
    if plan is None:
        plan = train_val_split(dataset, train_fraction, np.random.default_rng(split_seq))
    train = dataset.subset(plan.train_indices)
    val = dataset.subset(plan.val_indices)
    sampler = np.random.default_rng(sample_seq)
    trials = []
    best = None
    for r in range(R):
        params = space.sample(sampler)
        try:
            model = model_builder(train, params, np.random.default_rng(trial_seqs[r]))
            score = float(metric(model.predict(val.features), val.targets))
        except Exception as exc:
            raise TuningError(f"trial {r} failed with params {params}: {exc}") from exc
        if not math.isfinite(score):
            score = -math.inf
        trials.append((params, score))
        if best is None or score > best[1]:
            best = (params, score)
    return TuneReport(best[0], best[1], trials, R)


def refit_pooled(dataset: Dataset, best_params: dict, model_builder, rng):
    """Fit the chosen configuration on every row."""
    return model_builder(dataset, best_params, np.random.default_rng(rng))


# default spaces; the absolute-error criterion rows are out of scope

def rf_space() -> ParamSpace:
    return ParamSpace({
        "gamma": RealUniform(0.0, 1.0),
        "min_samples_split": IntRange(1, 20),
        "min_samples_leaf": IntRange(2, 20),
        "min_impurity_decrease": Choice((0.0, 0.01, 0.02, 0.05)),
        "max_depth": Choice((5, 10, 20, 50, None)),
    })


def frc_space(p: int) -> ParamSpace:
    combos = tuple(sorted(set(list(range(1, 11)) + [20, p])))
    return rf_space().extended(bootstrap=Choice((True, False)),
                               feature_combinations=Choice(combos))


def rf_plus_s_space(H: int) -> ParamSpace:
    return rf_space().extended(h=IntRange(0, H))
