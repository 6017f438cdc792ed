"""Synthetic sorter experiments: the L1 comparison table, the CNN depth
sweep and the single-element continuity sweep."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import normalized_rank
from .sorters import HandcraftedSorter, Sorter, predict_rank
from .synth import GenConfig, make_rng, split_seed
from .train import TrainConfig, TrainReport, evaluate_sorter, heldout_set, train_sorter

__all__ = [
    "ExperimentResult",
    "compare_sorters",
    "depth_sweep",
    "ProbeCurve",
    "continuity_probe",
    "write_csv",
]


@dataclass
class ExperimentResult:
    """A named metric table plus the files a run produced."""

    experiment: str
    config: dict
    rows: list[tuple[str, float]]
    files: list[str] = field(default_factory=list)
    seed: int = 0

    def table(self) -> str:
        width = max([len(name) for name, _ in self.rows] + [6])
        lines = [f"{'name':<{width}}  value"]
        lines += [f"{name:<{width}}  {value:.6g}" for name, value in self.rows]
        return "\n".join(lines)


def write_csv(path, header: list[str], rows, config: dict) -> Path:
    """CSV with a leading ``# config: {...}`` comment line, then the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def compare_sorters(sorters: dict[str, Sorter], gen_cfg: GenConfig, n: int = 10_000) -> list[tuple[str, float]]:
    """Held-out L1 of each sorter on one shared set, best first."""
    hx, hy = heldout_set(gen_cfg, n)
    rows = [(name, evaluate_sorter(s, hx, hy)) for name, s in sorters.items()]
    return sorted(rows, key=lambda r: (r[1], r[0]))


def handcrafted_entry(lam: float) -> tuple[str, Sorter]:
    return f"handcrafted(lam={lam:g})", HandcraftedSorter(lam=lam)


def depth_sweep(
    depths, gen_cfg: GenConfig, train_cfg: TrainConfig, **hyper
) -> tuple[list[tuple[int, int, float, float]], dict[int, TrainReport]]:
    """Train one CNN per depth on the same stream and held-out set.

    Returns CSV-ready rows ``(depth, epoch, train_loss, heldout_loss)`` and
    the per-depth reports. Initialisation seeds are split from
    ``train_cfg.seed`` per depth.
    """
    depths = list(depths)
    held = heldout_set(gen_cfg, train_cfg.heldout_size)
    seeds = split_seed(train_cfg.seed, len(depths))
    rows, reports = [], {}
    for depth, seed in zip(depths, seeds):
        cfg = TrainConfig(**{**train_cfg.__dict__, "seed": seed % 2**32})
        _, rep = train_sorter("cnn", gen_cfg, cfg, heldout=held, depth=depth, **hyper)
        reports[depth] = rep
        for epoch, (tr, he) in enumerate(zip(rep.train_loss, rep.heldout), start=1):
            rows.append((depth, epoch, tr, he))
    return rows, reports


@dataclass
class ProbeCurve:
    values: np.ndarray
    exact: np.ndarray
    predicted: np.ndarray

    @property
    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.predicted))))

    @property
    def mean_deviation(self) -> float:
        return float(np.mean(np.abs(self.predicted - self.exact)))

    def rows(self):
        return zip(self.values.tolist(), self.exact.tolist(), self.predicted.tolist())


def continuity_probe(sorter: Sorter, d: int, index: int = 1, step: float = 1e-3, seed: int = 0) -> ProbeCurve:
    """Sweep entry ``index`` of a fixed uniform[-1, 1] vector from -1 to 1.

    Records the exact and predicted normalised rank of that entry.
    """
    if not 0 <= index < d:
        raise ValueError(f"index {index} outside 0..{d - 1}")
    if step <= 0:
        raise ValueError("step must be positive")
    base = make_rng(seed).uniform(-1.0, 1.0, size=d)
    values = np.linspace(-1.0, 1.0, int(round(2.0 / step)) + 1)
    ys = np.tile(base, (len(values), 1))
    ys[:, index] = values
    exact = normalized_rank(ys)[:, index]
    predicted = predict_rank(sorter, ys)[:, index]
    return ProbeCurve(values, exact, predicted)
