import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffrank.metrics import (
    GroupBatch,
    average_precision,
    brute_force_ap,
    exact_rank,
    mean_average_precision,
    normalized_rank,
    rank_vector,
    recall_at_k,
    spearman,
)

distinct_vectors = st.lists(
    st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=30, unique=True
)


def stable_sort_ranks(y):
    """Oracle: position of each index in a stable sort by descending score."""
    order = sorted(range(len(y)), key=lambda i: (-y[i], i))
    ranks = [0] * len(y)
    for pos, i in enumerate(order):
        ranks[i] = pos
    return ranks


def sort_recall(Y, positives, K):
    hits = 0
    for i, row in enumerate(Y):
        top = sorted(range(len(row)), key=lambda j: (-row[j], j))[:K]
        hits += positives[i] in top
    return hits / len(Y)


def test_exact_rank_examples():
    assert exact_rank([0.1, 0.9, 0.5]).tolist() == [2, 0, 1]
    assert exact_rank([5, 1, 2, -3])[0] == 0
    assert exact_rank([0.3, 0.3, 0.1]).tolist() == [0, 1, 2]
    assert exact_rank([0.3, 0.3, 0.1]).tolist() == stable_sort_ranks([0.3, 0.3, 0.1])


def test_exact_rank_rejects_nan():
    with pytest.raises(ValueError):
        exact_rank([0.0, np.nan])


def test_exact_rank_rowwise():
    Y = np.array([[0.1, 0.9, 0.5], [3.0, 2.0, 1.0]])
    assert exact_rank(Y).tolist() == [[2, 0, 1], [0, 1, 2]]


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=12))
def test_exact_rank_matches_stable_sort_with_ties(y):
    assert exact_rank(y).tolist() == stable_sort_ranks(y)


@given(distinct_vectors, st.randoms())
def test_rank_permutation_equivariance(y, rnd):
    y = np.array(y)
    perm = list(range(len(y)))
    rnd.shuffle(perm)
    assert np.array_equal(exact_rank(y[perm]), exact_rank(y)[perm])


def test_rank_vector_normalisation():
    rv = rank_vector([0.1, 0.9, 0.5])
    assert rv.normalized.tolist() == [1.0, 0.0, 0.5]
    assert sorted(rv.ranks.tolist()) == [0, 1, 2]
    with pytest.raises(ValueError):
        normalized_rank([1.0])


def test_spearman_examples():
    y = np.random.default_rng(0).normal(size=10)
    assert spearman(y, y) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([0.1, 0.9, 0.5], [0.2, 1.0, 0.6]) == 1.0
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=30, unique=True), st.data())
@settings(max_examples=50)
def test_spearman_symmetric_and_monotone_invariant(y, data):
    y = np.array(y, dtype=float)
    y2 = np.array(data.draw(st.permutations(list(range(len(y))))), dtype=float)
    s = spearman(y, y2)
    assert -1.0 <= s <= 1.0
    assert s == spearman(y2, y)
    assert s == spearman(np.cbrt(y) * 7 + 2, y2)
    assert s == spearman(y, np.exp(y2 / 10))


def ap_by_enumeration(scores, labels):
    """Exact rational AP by listing items in descending order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, Fraction(0)
    for pos, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
            total += Fraction(hits, pos)
    return total / hits


def test_average_precision_examples():
    assert average_precision([0.9, 0.1, 0.8], [1, 0, 1]) == 1.0
    assert ap_by_enumeration([0.9, 0.1, 0.8], [0, 1, 1]) == Fraction(7, 12)
    assert average_precision([0.9, 0.1, 0.8], [0, 1, 1]) == pytest.approx(7 / 12, abs=1e-15)
    assert average_precision([0.4, 0.2, 0.9, 0.1], [1, 1, 1, 1]) == 1.0


def test_average_precision_needs_a_positive():
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        brute_force_ap([0.1, 0.2], [0, 0])


def test_brute_force_ap_examples():
    assert brute_force_ap([0.0, 1.0], [1, 0]) == 0.5
    assert brute_force_ap([1.0, 0.0], [1, 0]) == 1.0


@pytest.mark.parametrize("seed", range(20))
def test_ap_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 12))
    scores = rng.normal(size=d)
    labels = rng.integers(0, 2, size=d)
    labels[rng.integers(d)] = 1
    exact = ap_by_enumeration(scores.tolist(), labels.tolist())
    assert average_precision(scores, labels) == pytest.approx(float(exact), abs=1e-12)
    assert brute_force_ap(scores, labels) == pytest.approx(float(exact), abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=50)
def test_ap_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    scores = rng.uniform(-1, 1, size=15)
    labels = rng.integers(0, 2, size=15)
    labels[0] = 1
    assert average_precision(scores, labels) == average_precision(np.exp(3 * scores) - 5, labels)


def test_map_examples():
    s, l = [0.9, 0.1, 0.8], [0, 1, 1]
    assert mean_average_precision([s], [l]) == average_precision(s, l)
    two = mean_average_precision([[0.9, 0.1], [0.0, 1.0]], [[1, 0], [1, 0]])
    assert two == 0.75
    rng = np.random.default_rng(11)
    S = rng.normal(size=(5, 20))
    L = rng.integers(0, 2, size=(5, 20))
    L[:, 0] = 1
    assert mean_average_precision(S, L) == pytest.approx(np.mean([brute_force_ap(a, b) for a, b in zip(S, L)]), abs=1e-15)
    with pytest.raises(ValueError):
        mean_average_precision([[0.1, 0.2], [0.3, 0.4]], [[1, 0], [0, 0]])


def test_recall_examples():
    batch = GroupBatch(np.eye(5), np.arange(5))
    assert recall_at_k(batch, 1) == 1.0
    # positive is the second largest in every row
    Y = np.tile(np.array([3.0, 2.0, 1.0, 0.0]), (4, 1))
    second = GroupBatch(Y, np.ones(4, dtype=int))
    assert recall_at_k(second, 1) == 0.0
    assert recall_at_k(second, 2) == 1.0
    with pytest.raises(ValueError):
        recall_at_k(batch, 0)
    with pytest.raises(ValueError):
        recall_at_k(batch, 6)


@pytest.mark.parametrize("seed", range(10))
def test_recall_matches_sort_oracle(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(10, 10))
    pos = rng.integers(0, 10, size=10)
    batch = GroupBatch(Y, pos)
    for K in range(1, 11):
        assert recall_at_k(batch, K) == sort_recall(Y.tolist(), pos.tolist(), K)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_recall_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 15))
    batch = GroupBatch(rng.normal(size=(d, d)), rng.integers(0, d, size=d))
    vals = [recall_at_k(batch, K) for K in range(1, d + 1)]
    assert all(a <= b for a, b in itertools.pairwise(vals))
    assert vals[-1] == 1.0


def test_group_batch_validation():
    with pytest.raises(ValueError):
        GroupBatch(np.ones((2, 3)), [0, 1])
    with pytest.raises(ValueError):
        GroupBatch(np.ones((2, 2)), [0])
