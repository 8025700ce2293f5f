"""Brute-force verifiers for tiny discrete instances.

Threshold dichotomies of the hypercube are found by scanning integer weights
in {-5..5}^s0 with half-integer biases; every result carries a certificate
that is re-checked in integer arithmetic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import Dataset, FeatureMode
from .splitspace import CandidateSet, WeightBatch, WeightVector
from .tree import FitConfig, ObliqueTree, fit_tree

GRID = 5
MAX_S0 = 4


class OracleError(ValueError):
    pass


def hypercube(s0):
    """Vertices of {0,1}^s0 in lexicographic order, as an int array."""
    return np.array(list(itertools.product((0, 1), repeat=s0)), dtype=np.int64)


@dataclass(frozen=True)
class Dichotomy:
    positive: frozenset    # vertex indices (into hypercube(s0)) with w.v > c
    weight: tuple          # integer grid weights
    bias2: int             # twice the bias; always odd, so the bias is a half-integer
    s0: int

    @property
    def bias(self) -> Fraction:
        return Fraction(self.bias2, 2)

    def verify(self) -> bool:
        V = hypercube(self.s0)
        proj2 = 2 * (V @ np.array(self.weight, dtype=np.int64))
        pos = proj2 > self.bias2
        return {int(i) for i in np.flatnonzero(pos)} == set(self.positive)

    def to_json(self):
        return {"positive": sorted(self.positive), "weight": list(self.weight),
                "bias": str(self.bias), "s0": self.s0}


def enumerate_threshold_dichotomies(s0: int) -> list:
    """All vertex dichotomies of {0,1}^s0 cut by a hyperplane, with certificates.

    Includes the two trivial ones (nothing positive, everything positive).
    Sorted by the bitmask of the positive set.
    """
    if not 1 <= s0 <= MAX_S0:
        raise OracleError(f"s0 must lie in 1..{MAX_S0}, got {s0}")
    V = hypercube(s0)
    found = {}
    for w in itertools.product(range(-GRID, GRID + 1), repeat=s0):
        proj = V @ np.array(w, dtype=np.int64)
        levels = np.unique(proj)
        # c = u - 1/2 for the lowest level, then u + 1/2 after each level
        for bias2 in [2 * int(levels[0]) - 1] + [2 * int(u) + 1 for u in levels]:
            pos = frozenset(int(i) for i in np.flatnonzero(2 * proj > bias2))
            if pos not in found:
                found[pos] = Dichotomy(pos, tuple(int(v) for v in w), bias2, s0)
    out = sorted(found.values(), key=lambda d: sum(1 << i for i in d.positive))
    for d in out:
        if not d.verify():
            raise AssertionError(f"certificate failed for {d}")
    return out


def xor_variance_ratio(d: Dichotomy) -> Fraction:
    """Remaining variance fraction of the s0-bit parity after splitting by ``d``.

    Vertices carry equal mass; the parity takes values +1/-1.
    """
    V = hypercube(d.s0)
    y = [1 if int(v.sum()) % 2 else -1 for v in V]
    N = len(y)
    mean = Fraction(sum(y), N)
    total = sum((Fraction(v) - mean) ** 2 for v in y) / N
    within = Fraction(0)
    for side in (d.positive, frozenset(range(N)) - d.positive):
        if not side:
            continue
        vals = [y[i] for i in side]
        m = Fraction(sum(vals), len(vals))
        within += sum((Fraction(v) - m) ** 2 for v in vals) / N
    return within / total


def xor_best_alpha(s0: int) -> Fraction:
    """Smallest remaining-variance fraction over all threshold dichotomies."""
    return min(xor_variance_ratio(d) for d in enumerate_threshold_dichotomies(s0))


def oracle_directions(p: int, s: int) -> list:
    """Unit directions lifted from every certificate over every coordinate subset of size <= s.

    Deduplicated; together their sample-projection thresholds realize every
    s-sparse hyperplane dichotomy of binary data.
    """
    if not 1 <= s <= min(p, MAX_S0):
        raise OracleError(f"need 1 <= s <= min(p, {MAX_S0})")
    certs = {k: enumerate_threshold_dichotomies(k) for k in range(1, s + 1)}
    seen = set()
    out = []
    for k in range(1, s + 1):
        for J in itertools.combinations(range(p), k):
            for d in certs[k]:
                w = np.zeros(p)
                w[list(J)] = d.weight
                if not np.any(w):
                    continue
                v = WeightVector.from_dense(w / math.sqrt(float(np.dot(w, w))))
                if v.key not in seen:
                    seen.add(v.key)
                    out.append(v)
    return out


def ideal_tree_bruteforce(dataset: Dataset, s: int, H: int, fit_config: FitConfig | None = None,
                          rng=0) -> ObliqueTree:
    """Greedy tree over every sample-distinguishable s-sparse split of binary data."""
    if dataset.feature_mode is not FeatureMode.BINARY:
        raise OracleError("ideal trees are only computable for binary features")
    if dataset.p > 6 or s > 3 or H > 3:
        raise OracleError(f"instance too large for brute force (p={dataset.p}, s={s}, H={H}); "
                          "limits are p <= 6, s <= 3, H <= 3")
    if fit_config is None:
        fit_config = FitConfig(depth=H)
    elif fit_config.depth != H:
        raise OracleError("fit_config depth must equal H")
    batch = WeightBatch.from_vectors(oracle_directions(dataset.p, s), dataset.p)
    return fit_tree(dataset, CandidateSet(dataset, batch), fit_config, np.random.default_rng(rng))
