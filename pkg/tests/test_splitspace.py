import math

import numpy as np
import pytest
from scipy import stats

from progtree.data import Dataset
from progtree.splitspace import (CandidatePool, CandidateSet, ObliqueSplit, SplitSpaceError,
                                 WeightBatch, WeightVector, draw_iteration_candidates,
                                 lambda_set, project, project_rows, sample_weight_batch,
                                 sample_weight_vector)


def test_p1_weight_is_plus_or_minus_one():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(50):
        w = sample_weight_vector(1, 1, rng)
        assert w.idx.tolist() == [0]
        seen.add(float(w.val[0]))
    assert seen == {1.0, -1.0}


def test_sparsity_law_is_uniform():
    batch = sample_weight_batch(20, 5, 100_000, np.random.default_rng(1))
    counts = np.bincount(batch.nnz, minlength=6)[1:]
    assert stats.chisquare(counts).pvalue > 0.01


def test_invariants_on_many_draws():
    batch = sample_weight_batch(30, 6, 2000, np.random.default_rng(2))
    for w in batch.vectors():
        assert abs(math.fsum(v * v for v in w.val) - 1) <= 1e-12
        assert 1 <= w.nnz <= 6
        assert np.all(np.diff(w.idx) > 0) and w.idx[-1] < 30


def test_support_uniformity():
    batch = sample_weight_batch(6, 2, 10_000, np.random.default_rng(3))
    freq = np.zeros(6)
    for w in batch.vectors():
        freq[w.idx] += 1
    freq /= 10_000
    expected = 1.5 / 6  # E[k] / p
    se = math.sqrt(expected * (1 - expected) / 10_000)
    assert np.all(np.abs(freq - expected) <= 3 * se)


def test_weight_vector_validation():
    with pytest.raises(SplitSpaceError):
        WeightVector([0, 1], [1.0, 1.0], 3)
    with pytest.raises(SplitSpaceError):
        WeightVector([1, 0], [0.6, 0.8], 3)
    with pytest.raises(SplitSpaceError):
        WeightVector([0, 3], [0.6, 0.8], 3)


def test_project_examples():
    e1 = WeightVector([0], [1.0], 2)
    assert project(e1, [0.3, 0.7]) == 0.3
    r = 1 / math.sqrt(2)
    w = WeightVector.from_dense([r, r])
    assert abs(project(w, [1.0, 1.0]) - math.sqrt(2)) <= 1e-12
    with pytest.raises(SplitSpaceError):
        project(w, [1.0, 1.0, 1.0])


def test_project_matches_dense_dot():
    rng = np.random.default_rng(4)
    for _ in range(100):
        w = sample_weight_vector(12, 4, rng)
        x = rng.random(12)
        assert abs(project(w, x) - float(w.dense() @ x)) <= 1e-12


def test_batch_projection_bitwise_equals_single():
    rng = np.random.default_rng(5)
    X = rng.random((40, 9))
    batch = sample_weight_batch(9, 4, 25, rng)
    Z = batch.project(X)
    for d, w in enumerate(batch.vectors()):
        assert np.array_equal(Z[d], project_rows(w, X))
        assert Z[d][3] == project(w, X[3])


def test_lambda_binary_axis():
    X = np.random.default_rng(6).integers(0, 2, (30, 3))
    d = Dataset(X, np.zeros(30))
    splits = lambda_set(WeightVector([0], [1.0], 3), d)
    assert [s.bias for s in splits] == sorted({float(v) for v in X[:, 0]})
    assert len(splits) <= 2


def test_lambda_continuous_generic_count():
    rng = np.random.default_rng(7)
    d = Dataset(rng.random((250, 5)), np.zeros(250))
    w = sample_weight_vector(5, 5, rng)
    z = np.sort(project_rows(w, d.features))
    distinct = 1 + int(np.sum(z[1:] != z[:-1]))
    assert len(lambda_set(w, d)) == distinct == 250


def test_lambda_duplicate_rows():
    d = Dataset([[0.2, 0.3]] * 4 + [[0.5, 0.1]], np.zeros(5))
    w = WeightVector.from_dense([0.6, 0.8])
    splits = lambda_set(w, d)
    assert len(splits) == len(set(splits)) == 2


def test_biases_are_realizable_and_partition_like_midpoints():
    rng = np.random.default_rng(8)
    d = Dataset(rng.random((18, 4)), np.zeros(18))
    w = sample_weight_vector(4, 3, rng)
    z = project_rows(w, d.features)
    splits = lambda_set(w, d)
    zs = np.unique(z)
    for k, sp in enumerate(splits):
        assert np.any(z == sp.bias)
        if k + 1 < len(zs):
            mid = 0.5 * (zs[k] + zs[k + 1])
            assert np.array_equal(sp.goes_right(d.features), z > mid)


def test_candidate_set_iteration_and_dedup():
    rng = np.random.default_rng(9)
    d = Dataset(rng.random((10, 3)), np.zeros(10))
    batch = sample_weight_batch(3, 2, 3, rng)
    cs = CandidateSet(d, batch)
    listed = list(cs)
    assert len(listed) == len(cs) == 30
    dup = listed[4]
    other = ObliqueSplit(WeightVector([1], [1.0], 3), 0.5)
    cs2 = cs.union([dup, other, other])
    assert len(cs2) == 31 and cs2.extra == (other,)


def test_finite_pool_full_subset_every_call():
    rng = np.random.default_rng(10)
    d = Dataset(rng.random((12, 4)), np.zeros(12))
    pool = CandidatePool.finite(3, 4, 2, 3, rng)
    want = {sp.key for sp in pool.full_candidates(d)}
    for l in range(4):
        got = {sp.key for sp in draw_iteration_candidates(pool, d, np.random.default_rng(l))}
        assert got == want


def test_infinite_pool_size_and_determinism():
    rng = np.random.default_rng(11)
    d = Dataset(rng.random((250, 20)), np.zeros(250))
    pool = CandidatePool.infinite(20, 5, 100)
    a = draw_iteration_candidates(pool, d, np.random.default_rng(3))
    b = draw_iteration_candidates(pool, d, np.random.default_rng(3))
    assert len(a) <= 100 * 250
    assert [s.key for s in a] == [s.key for s in b]


def test_finite_subset_without_replacement():
    rng = np.random.default_rng(12)
    d = Dataset(rng.random((5, 6)), np.zeros(5))
    pool = CandidatePool.finite(20, 6, 3, 7, rng)
    cs = draw_iteration_candidates(pool, d, np.random.default_rng(1))
    keys = [w.key for w in cs.full.vectors()]
    assert len(keys) == len(set(keys)) == 7


def test_pool_json_roundtrip():
    pool = CandidatePool.finite(5, 8, 3, 2, np.random.default_rng(13))
    back = CandidatePool.from_json(pool.to_json())
    assert [w.key for w in back.weights.vectors()] == [w.key for w in pool.weights.vectors()]
    assert CandidatePool.from_json(CandidatePool.infinite(8, 3, 2).to_json()).B == math.inf


def test_split_json_roundtrip_exact():
    w = sample_weight_vector(7, 3, np.random.default_rng(14))
    sp = ObliqueSplit(w, 0.123456789012345)
    assert ObliqueSplit.from_json(sp.to_json(), 7) == sp
    assert WeightBatch.from_vectors([w]).vector(0) == w
