"""Rank-based training losses built on a differentiable sorter.

Every loss takes the sorter as a callable from raw scores to predicted
normalised ranks, so the exact rank function can be swapped in as an
oracle (see ``sorters.ExactSorter``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .metrics import normalized_rank
from .tensor import ShapeError, Tensor

__all__ = [
    "LossConfig",
    "sorter_l1_loss",
    "spearman_loss",
    "map_loss",
    "triplet_rank_loss",
    "recall_loss",
    "aligned_loss",
]


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    aux_weight: float = 0.0
    aux_kind: str = "l1"
    aux_schedule: str = "first_epoch_only"
    d: int = 20

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be >= 0")
        if self.aux_kind not in ("l1", "l2"):
            raise ValueError(f"unknown auxiliary loss {self.aux_kind!r}")
        if self.aux_schedule not in ("first_epoch_only", "always"):
            raise ValueError(f"unknown auxiliary schedule {self.aux_schedule!r}")


def sorter_l1_loss(predicted, target) -> Tensor:
    """Mean absolute error, so the value does not grow with ``d``."""
    predicted = T.tensor(predicted)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeError(f"prediction {predicted.shape} vs target {target.shape}")
    return T.mean(T.abs(predicted - target))


def spearman_loss(scores, gt_scores, sorter) -> Tensor:
    """Mean squared gap between predicted ranks and the true normalised ranks.

    The mean runs over the ``d`` items of a group, and over groups too when
    the input is ``(batch, d)``.
    """
    scores = T.tensor(scores)
    gt = np.asarray(gt_scores, dtype=np.float64)
    if gt.shape != scores.shape:
        raise ShapeError(f"scores {scores.shape} vs ground truth {gt.shape}")
    if np.any(np.ptp(gt, axis=-1) == 0):
        warnings.warn("constant ground-truth group; ranks fall back to index order", RuntimeWarning, stacklevel=2)
    target = normalized_rank(gt)
    return T.mean(T.square(sorter(scores) - target))


def map_loss(class_scores, labels, sorter) -> Tensor:
    """Mean predicted normalised rank of the positive items, per class.

    ``class_scores`` is ``(C, d)``: row ``c`` holds the scores of the ``d``
    items for class ``c``. Rows are weighted ``1 / (C * rel_c)``.
    """
    class_scores = T.tensor(class_scores)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != class_scores.shape:
        raise ShapeError(f"scores {class_scores.shape} vs labels {labels.shape}")
    rel = labels.sum(axis=-1, keepdims=True)
    if np.any(rel == 0):
        raise ValueError("every class needs at least one positive item")
    rows = int(np.prod(labels.shape[:-1]))
    weights = labels / (rel * rows)
    return T.sum(sorter(class_scores) * weights)


def triplet_rank_loss(column, p: int, c: int, margin: float, sorter) -> Tensor:
    """Hinge on predicted ranks: positive ``p`` should beat negative ``c`` by ``margin``."""
    if p == c:
        raise ValueError("positive and negative indices must differ")
    r = sorter(T.tensor(column))
    return T.relu(margin + r[p] - r[c])


def recall_loss(Y, positives, margin: float, sorter) -> Tensor:
    """Hard-negative rank triplet loss averaged over the ``d`` queries.

    ``Y[i]`` holds query ``i``'s scores; its negatives are every index other
    than ``positives[i]`` and ``i`` itself. The hardest negative is picked by
    the tie-breaking max reduction (lowest index wins).
    """
    Y = T.tensor(Y)
    d = Y.shape[-1]
    if Y.shape != (d, d):
        raise ShapeError(f"Y must be square, got {Y.shape}")
    if d < 3:
        raise ValueError("need d >= 3 so every query has a negative")
    positives = np.asarray(positives, dtype=np.intp)
    rows = np.arange(d)
    r = sorter(Y)
    r_pos = T.reshape(r[rows, positives], (d, 1))
    mask = np.zeros((d, d))
    mask[rows, positives] = -np.inf
    mask[rows, rows] = -np.inf
    hardest = T.max(margin + r_pos - r + mask, axis=1)
    return T.mean(T.relu(hardest))


def aligned_loss(
    main: Tensor,
    scores,
    targets,
    weight: float,
    aux: str = "l1",
    schedule: str = "first_epoch_only",
    epoch: int = 0,
) -> Tensor:
    """``main + weight * aux``; under ``first_epoch_only`` the aux term exists only in epoch 0."""
    if weight < 0:
        raise ValueError("weight must be >= 0")
    if weight == 0 or (schedule == "first_epoch_only" and epoch > 0):
        return main
    diff = T.tensor(scores) - np.asarray(targets, dtype=np.float64)
    term = T.mean(T.abs(diff)) if aux == "l1" else T.mean(T.square(diff))
    return main + T.scale(term, weight)
