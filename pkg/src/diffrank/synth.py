"""Synthetic (scores, ranks) pairs for pretraining sorters.

Randomness comes from numpy's counter-based Philox generator seeded with the
64-bit ``GenConfig.seed``. Draw order per vector, which fixes every stream:

* ``mixture`` first picks one of the four families below with
  ``mixture_weights`` (one ``choice`` call), then draws from it.
* ``uniform``: ``d`` draws from U[-1, 1].
* ``normal``: ``d`` draws from N(0, 1).
* ``evenly_spaced``: two U[-1, 1] draws give the sub-range ``a < b``;
  ``linspace(a, b, d)`` is then shuffled with one ``permutation`` call.
* ``segments``: ``k`` uniform in {2, 3}; ``k - 1`` distinct cut points in
  ``1..d-1``; per segment a family index in {uniform, normal, evenly_spaced}
  and its values (normal clipped to [-3, 3] and divided by 3); finally the
  whole vector is shuffled.

A vector with exact duplicates is thrown away and redrawn.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .metrics import RankVector, rank_vector

DISTRIBUTIONS = ("uniform", "normal", "evenly_spaced", "mixture")
_MIXTURE_FAMILIES = ("uniform", "normal", "evenly_spaced", "segments")


@dataclass(frozen=True)
class GenConfig:
    d: int = 100
    seed: int = 0
    distribution: str = "mixture"
    # weights over (uniform, normal, evenly_spaced, segments)
    mixture_weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        w = np.asarray(self.mixture_weights, dtype=np.float64)
        if w.shape != (4,) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture_weights must be 4 non-negative reals summing to 1")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def split_seed(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit child seeds from a master seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _evenly_spaced(rng: np.random.Generator, n: int) -> np.ndarray:
    a, b = np.sort(rng.uniform(-1.0, 1.0, size=2))
    return rng.permutation(np.linspace(a, b, n))


def _segments(rng: np.random.Generator, d: int) -> np.ndarray:
    k = min(int(rng.integers(2, 4)), d)
    cuts = np.sort(rng.choice(np.arange(1, d), size=k - 1, replace=False))
    parts = []
    for n in np.diff(np.concatenate(([0], cuts, [d]))):
        family = int(rng.integers(3))
        if family == 0:
            parts.append(rng.uniform(-1.0, 1.0, size=n))
        elif family == 1:
            parts.append(np.clip(rng.standard_normal(n), -3.0, 3.0) / 3.0)
        else:
            parts.append(_evenly_spaced(rng, n) if n > 1 else rng.uniform(-1.0, 1.0, size=1))
    return rng.permutation(np.concatenate(parts))


def _draw(rng: np.random.Generator, family: str, d: int) -> np.ndarray:
    if family == "uniform":
        return rng.uniform(-1.0, 1.0, size=d)
    if family == "normal":
        return rng.standard_normal(d)
    if family == "evenly_spaced":
        return _evenly_spaced(rng, d)
    return _segments(rng, d)


def sample_scores(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    while True:
        family = cfg.distribution
        if family == "mixture":
            family = _MIXTURE_FAMILIES[int(rng.choice(4, p=cfg.mixture_weights))]
        y = _draw(rng, family, cfg.d)
        if np.unique(y).size == cfg.d:
            return y


def make_pair(cfg: GenConfig, rng: np.random.Generator | None = None) -> tuple[np.ndarray, RankVector]:
    """One (scores, ranks) pair; without ``rng`` it is a pure function of ``cfg``."""
    rng = make_rng(cfg.seed) if rng is None else rng
    y = sample_scores(cfg, rng)
    return y, rank_vector(y)


def sample_batch(cfg: GenConfig, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` score vectors and their normalised ranks, both ``(n, d)``."""
    ys = np.stack([sample_scores(cfg, rng) for _ in range(n)])
    return ys, rank_vector(ys).normalized


def batch_stream(cfg: GenConfig, batch_size: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of mini-batches, fully determined by ``cfg``."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = make_rng(cfg.seed)
    while True:
        yield sample_batch(cfg, rng, batch_size)


def dump_csv(path, scores: np.ndarray, ranks: np.ndarray) -> None:
    """One row per pair: ``d`` scores then ``d`` normalised ranks."""
    scores = np.atleast_2d(scores)
    ranks = np.atleast_2d(ranks)
    d = scores.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"y{i}" for i in range(d)] + [f"r{i}" for i in range(d)])
        for y, r in zip(scores, ranks):
            w.writerow([repr(float(v)) for v in y] + [repr(float(v)) for v in r])


def load_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = data.shape[1] // 2
    return data[:, :d], data[:, d:]
