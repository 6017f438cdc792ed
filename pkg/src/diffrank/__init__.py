"""Learned differentiable sorters and the rank-based losses built on them."""

from .metrics import (
    GroupBatch,
    average_precision,
    brute_force_ap,
    exact_rank,
    mean_average_precision,
    normalized_rank,
    recall_at_k,
    spearman,
)
from .sorters import CnnSorter, ExactSorter, HandcraftedSorter, LstmSorter, predict_rank
from .synth import GenConfig

__version__ = "0.1.0"
