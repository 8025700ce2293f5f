import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from progtree.data import Dataset
from progtree.experiments import XorSpec, gen_xor
from progtree.oracle import (OracleError, enumerate_threshold_dichotomies, hypercube,
                             ideal_tree_bruteforce, oracle_directions, xor_best_alpha,
                             xor_variance_ratio)
from progtree.progressive import ProgressiveConfig, refine
from progtree.splitspace import CandidatePool, CandidateSet, WeightBatch
from progtree.tree import FitConfig, fit_tree, sample_equivalent


def separable(V, mask):
    """LP feasibility: w.v - c >= 1 on positives, <= -1 on the rest."""
    sign = np.where(mask, -1.0, 1.0)
    A = sign[:, None] * np.hstack([V, -np.ones((len(V), 1))])
    res = linprog(np.zeros(V.shape[1] + 1), A_ub=A, b_ub=-np.ones(len(V)),
                  bounds=[(None, None)] * (V.shape[1] + 1), method="highs")
    return res.status == 0


def lp_dichotomies(s0):
    """Every separable vertex subset, by scanning subsets without vertex 0 and complementing."""
    V = hypercube(s0).astype(float)
    N = len(V)
    found = set()
    for m in range(0, 2 ** N, 2):
        mask = np.array([(m >> i) & 1 for i in range(N)], dtype=bool)
        if separable(V, mask):
            pos = frozenset(np.flatnonzero(mask).tolist())
            found |= {pos, frozenset(range(N)) - pos}
    return found


@pytest.mark.parametrize("s0,count", [(1, 4), (2, 14), (3, 104)])
def test_counts_match_lp_oracle(s0, count):
    got = {d.positive for d in enumerate_threshold_dichotomies(s0)}
    want = lp_dichotomies(s0)
    assert got == want and len(got) == count


def test_grid_complete_for_four_bits():
    got = {d.positive for d in enumerate_threshold_dichotomies(4)}
    assert got == lp_dichotomies(4)
    assert len(got) == 1882


def test_one_bit_listing():
    ds = enumerate_threshold_dichotomies(1)
    assert [sorted(d.positive) for d in ds] == [[], [0], [1], [0, 1]]


@pytest.mark.parametrize("s0", [1, 2, 3, 4])
def test_certificates_complement_and_bound(s0):
    ds = enumerate_threshold_dichotomies(s0)
    full = frozenset(range(2 ** s0))
    sets = {d.positive for d in ds}
    assert all(full - s in sets for s in sets)
    assert len(ds) <= 2 ** ((s0 + 1) ** 2)
    V = hypercube(s0)
    for d in ds:
        assert d.bias2 % 2 == 1
        proj2 = [2 * sum(int(a) * b for a, b in zip(v, d.weight)) for v in V]
        assert {i for i, z in enumerate(proj2) if z > d.bias2} == set(d.positive)
        assert d.verify()


def test_range_errors():
    for bad in (0, 5):
        with pytest.raises(OracleError):
            enumerate_threshold_dichotomies(bad)


def float_ratio(s0, positive):
    V = hypercube(s0)
    y = np.where(V.sum(axis=1) % 2 == 1, 1.0, -1.0)
    mask = np.zeros(len(y), bool)
    mask[list(positive)] = True
    within = sum(((y[m] - y[m].mean()) ** 2).sum() for m in (mask, ~mask) if m.any())
    return within / ((y - y.mean()) ** 2).sum()


@pytest.mark.parametrize("s0", [1, 2, 3])
def test_best_alpha_bound_and_value(s0):
    alpha = xor_best_alpha(s0)
    assert isinstance(alpha, Fraction)
    assert float(alpha) <= 1 - 2.0 ** -s0 + 1e-12
    brute = min(float_ratio(s0, pos) for pos in lp_dichotomies(s0))
    assert abs(float(alpha) - brute) <= 1e-12


def test_best_alpha_exact_small_cases():
    assert xor_best_alpha(1) == 0
    assert xor_best_alpha(2) == Fraction(2, 3)
    d = enumerate_threshold_dichotomies(2)[0]
    assert xor_variance_ratio(d) == 1


def test_directions_are_unit_and_sparse():
    ws = oracle_directions(5, 2)
    assert len({w.key for w in ws}) == len(ws)
    assert all(1 <= w.nnz <= 2 for w in ws)
    with pytest.raises(OracleError):
        oracle_directions(3, 5)


def test_ideal_one_bit_xor_is_exact():
    train, _, _ = gen_xor(XorSpec(40, 4, 1), np.random.default_rng(0))
    tree = ideal_tree_bruteforce(train, 1, 1)
    assert tree.training_sse(train) == 0.0


def test_ideal_guards():
    rng = np.random.default_rng(1)
    big = Dataset(rng.integers(0, 2, (10, 7)), rng.normal(size=10))
    with pytest.raises(OracleError):
        ideal_tree_bruteforce(big, 2, 2)
    small = Dataset(rng.integers(0, 2, (10, 4)), rng.normal(size=10))
    with pytest.raises(OracleError):
        ideal_tree_bruteforce(small, 4, 2)
    with pytest.raises(OracleError):
        ideal_tree_bruteforce(small, 2, 4)
    cont = Dataset(rng.random((10, 3)), rng.normal(size=10))
    with pytest.raises(OracleError):
        ideal_tree_bruteforce(cont, 1, 1)


def test_duplicate_candidates_do_not_change_ideal_sse():
    rng = np.random.default_rng(2)
    d = Dataset(rng.integers(0, 2, (30, 4)).astype(float), rng.normal(size=30))
    ideal = ideal_tree_bruteforce(d, 2, 2)
    ws = oracle_directions(4, 2)
    doubled = CandidateSet(d, WeightBatch.from_vectors(ws + ws[::3]))
    again = fit_tree(d, doubled, FitConfig(depth=2), np.random.default_rng(5))
    assert again.training_sse(d) == ideal.training_sse(d)


def test_ideal_loss_is_global_minimum_at_root():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, (25, 3)).astype(float)
    y = rng.normal(size=25)
    d = Dataset(X, y)
    ideal = ideal_tree_bruteforce(d, 3, 1)
    # every dichotomy of the distinct rows realizable by a hyperplane in {0,1}^3
    V = hypercube(3)
    best = np.inf
    for dic in enumerate_threshold_dichotomies(3):
        pos = {tuple(V[i]) for i in dic.positive}
        right = np.array([tuple(int(v) for v in x) in pos for x in X])
        sse = sum(((y[m] - y[m].mean()) ** 2).sum() for m in (right, ~right) if m.any())
        best = min(best, sse)
    assert abs(ideal.root.loss - best) <= 1e-10


def test_progressive_reaches_ideal():
    rng = np.random.default_rng(4)
    d = Dataset(rng.integers(0, 2, (35, 4)).astype(float), rng.normal(size=35))
    ideal = ideal_tree_bruteforce(d, 2, 2)
    pool = CandidatePool.from_vectors(oracle_directions(4, 2), 2, 8)
    for seed in range(5):
        flags = []
        refine(d, ProgressiveConfig(pool, 2000, FitConfig(depth=2), seed=seed),
               callback=lambda l, t: flags.append(sample_equivalent(t, ideal, d)),
               early_stop=lambda h: flags[-1])
        assert flags[-1]
