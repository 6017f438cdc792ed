"""Exact ranking function and rank-based evaluation metrics.

Rank convention throughout the package: 0-based and descending, i.e. the
rank of an entry is the number of entries strictly ahead of it, with ties
going to the earlier index. Normalised ranks divide by ``d - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RankVector",
    "GroupBatch",
    "exact_rank",
    "normalized_rank",
    "rank_vector",
    "spearman",
    "average_precision",
    "brute_force_ap",
    "mean_average_precision",
    "recall_at_k",
]


@dataclass(frozen=True)
class RankVector:
    ranks: np.ndarray
    normalized: np.ndarray


@dataclass
class GroupBatch:
    """Pairwise scores for a group of ``d`` queries.

    ``Y[i]`` is the score vector of query ``i`` over the ``d`` candidates and
    ``positives[i]`` is the index of its single relevant candidate.
    """

    Y: np.ndarray
    positives: np.ndarray

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.float64)
        self.positives = np.asarray(self.positives, dtype=np.intp)
        if self.Y.ndim != 2 or self.Y.shape[0] != self.Y.shape[1]:
            raise ValueError(f"Y must be square, got {self.Y.shape}")
        if self.positives.shape != (self.Y.shape[0],):
            raise ValueError("need exactly one positive index per query")

    @property
    def d(self) -> int:
        return self.Y.shape[0]


def _as_scores(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.isnan(y).any():
        raise ValueError("scores contain NaN")
    return y


def exact_rank(y) -> np.ndarray:
    """Integer ranks along the last axis (0 = largest score).

    Works on a single vector or on a stack of vectors.
    """
    y = _as_scores(y)
    # stable sort of -y keeps earlier indices first among ties
    order = np.argsort(-y, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(y.shape[-1]), axis=-1)
    return ranks


def normalized_rank(y) -> np.ndarray:
    y = np.asarray(y)
    d = y.shape[-1]
    if d < 2:
        raise ValueError("need at least two scores to normalise ranks")
    return exact_rank(y) / (d - 1)


def rank_vector(y) -> RankVector:
    r = exact_rank(y)
    return RankVector(r, r / (r.shape[-1] - 1))


def spearman(y, y2) -> float:
    y, y2 = _as_scores(y), _as_scores(y2)
    if y.shape != y2.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y2.shape}")
    d = y.shape[-1]
    if d < 2:
        raise ValueError("spearman needs d >= 2")
    diff = exact_rank(y) - exact_rank(y2)
    return float(1.0 - 6.0 * np.sum(diff * diff) / (d * (d * d - 1)))


def _check_ap_inputs(scores, labels):
    scores = _as_scores(scores)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ")
    if not labels.any():
        raise ValueError("average precision is undefined without positives")
    return scores, labels


def average_precision(scores, labels) -> float:
    scores, labels = _check_ap_inputs(scores, labels)
    rank1 = exact_rank(scores) + 1
    pos_ranks = np.sort(rank1[labels])
    # the k-th best-ranked positive has exactly k positives at or above it
    hits = np.arange(1, pos_ranks.size + 1)
    return float(np.mean(hits / pos_ranks))


def brute_force_ap(scores, labels) -> float:
    """O(d^2) AP by explicit pairwise counting; independent of ``exact_rank``."""
    scores, labels = _check_ap_inputs(scores, labels)
    d = len(scores)
    total = 0.0
    n_pos = 0
    for j in range(d):
        if not labels[j]:
            continue
        n_pos += 1
        ahead = 0
        pos_ahead = 0
        for s in range(d):
            if s == j:
                continue
            if scores[s] > scores[j] or (scores[s] == scores[j] and s < j):
                ahead += 1
                pos_ahead += bool(labels[s])
        total += (pos_ahead + 1) / (ahead + 1)
    return total / n_pos


def mean_average_precision(scores, labels) -> float:
    scores = np.atleast_2d(_as_scores(scores))
    labels = np.atleast_2d(np.asarray(labels))
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ")
    return float(np.mean([average_precision(s, l) for s, l in zip(scores, labels)]))


def recall_at_k(batch: GroupBatch, K: int) -> float:
    d = batch.d
    if not 1 <= K <= d:
        raise ValueError(f"K={K} outside [1, {d}]")
    ranks = exact_rank(batch.Y)
    pos = ranks[np.arange(d), batch.positives]
    return float(np.mean(pos < K))
