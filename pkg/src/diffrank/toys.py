"""Small downstream tasks trained through a (frozen) sorter.

Each task has a seeded generator, a tiny scorer and an exact metric:

* ``spearman_toy``: items carry a hidden score that is a noisy monotone
  function of their features; a 2-layer scorer learns to order groups of
  ``d`` items. Metric: mean exact Spearman correlation per group.
* ``map_toy``: linearly separable multi-label data, a linear scorer per
  class. Metric: exact mAP over the test set. A binary cross-entropy run
  serves as the baseline.
* ``retrieval_toy``: two noisy views of the same cluster centre in
  different feature spaces, embedded by two linear maps and compared by
  cosine similarity. Metric: R@1 and R@5 over groups of ``d`` pairs.

Metrics are always computed with the exact rank functions, never the sorter.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .losses import LossConfig, aligned_loss, map_loss, recall_loss, spearman_loss
from .metrics import GroupBatch, mean_average_precision, recall_at_k, spearman
from .sorters import Sorter
from .synth import make_rng, split_seed
from .tensor import Tensor
from .train import Adam, TrainReport, lr_schedule

log = logging.getLogger(__name__)

TASKS = ("spearman_toy", "map_toy", "retrieval_toy")


@dataclass
class ToyConfig:
    epochs: int = 12
    steps_per_epoch: int = 25
    groups_per_step: int = 8
    lr: float = 1e-2
    halving_period: int = 3
    seed: int = 0
    freeze_sorter: bool = True
    n_test_groups: int = 100
    n_classes: int = 5

    def __post_init__(self):
        for name in ("epochs", "steps_per_epoch", "groups_per_step", "halving_period", "n_test_groups", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


# scorers


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.params = {
            "weight": Tensor(rng.uniform(-bound, bound, (n_out, n_in)), requires_grad=True),
            "bias": Tensor(np.zeros(n_out), requires_grad=True),
        }

    def __call__(self, x) -> Tensor:
        return T.affine(x, self.params["weight"], self.params["bias"])


class Mlp:
    """``n_in -> hidden (tanh) -> 1``; returns one score per row."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.l1 = Linear(n_in, hidden, rng)
        self.l2 = Linear(hidden, 1, rng)
        self.params = {f"l1.{k}": v for k, v in self.l1.params.items()}
        self.params.update({f"l2.{k}": v for k, v in self.l2.params.items()})

    def __call__(self, x) -> Tensor:
        out = self.l2(T.tanh(self.l1(x)))
        return T.reshape(out, out.shape[:-1])


class DualEncoder:
    """Two linear maps into a shared space; similarity is cosine."""

    def __init__(self, n_a: int, n_b: int, dim: int, rng: np.random.Generator):
        self.a = Linear(n_a, dim, rng)
        self.b = Linear(n_b, dim, rng)
        self.params = {f"a.{k}": v for k, v in self.a.params.items()}
        self.params.update({f"b.{k}": v for k, v in self.b.params.items()})

    @staticmethod
    def _unit(x: Tensor) -> Tensor:
        return x / T.sqrt(T.sum(T.square(x), axis=-1, keepdims=True) + 1e-12)

    def __call__(self, xa, xb) -> Tensor:
        ea, eb = self._unit(self.a(xa)), self._unit(self.b(xb))
        return T.matmul(ea, T.transpose(eb))


# data


@dataclass
class SpearmanData:
    features: np.ndarray  # (n, k)
    target: np.ndarray  # (n,)


def spearman_data(n: int, rng: np.random.Generator, k: int = 6, noise: float = 0.05, w=None) -> tuple[SpearmanData, np.ndarray]:
    """Target is a monotone function of ``w . x`` plus noise; pass ``w`` to reuse a task."""
    if w is None:
        w = rng.normal(size=k) / np.sqrt(k)
    x = rng.normal(size=(n, len(w)))
    u = x @ w
    target = np.tanh(1.5 * u) + 0.2 * u + noise * rng.normal(size=n)
    return SpearmanData(x, target), w


@dataclass
class MapData:
    features: np.ndarray  # (n, k)
    labels: np.ndarray  # (n, C) in {0, 1}


def map_data(n: int, n_classes: int, rng: np.random.Generator, k: int = 10, w=None, b=None) -> tuple[MapData, np.ndarray, np.ndarray]:
    """Labels are ``w_c . x + b_c > 0``, so a linear scorer can be perfect."""
    if w is None:
        w = rng.normal(size=(n_classes, k))
        b = rng.uniform(-1.0, 1.0, size=n_classes) * np.sqrt(k) * 0.5
    x = rng.normal(size=(n, k))
    labels = (x @ w.T + b > 0).astype(np.int64)
    return MapData(x, labels), w, b


@dataclass
class PairData:
    view_a: np.ndarray  # (n, k_a)
    view_b: np.ndarray  # (n, k_b)
    cluster: np.ndarray  # (n,)


def retrieval_data(
    n: int, rng: np.random.Generator, n_clusters: int = 200, k: int = 8, k_a: int = 12, k_b: int = 10, noise: float = 0.1, maps=None
) -> tuple[PairData, tuple]:
    """Pairs of views of a shared cluster centre; ``maps`` fixes centres and projections."""
    if maps is None:
        centres = rng.normal(size=(n_clusters, k))
        maps = (centres, rng.normal(size=(k_a, k)), rng.normal(size=(k_b, k)))
    centres, ma, mb = maps
    cluster = rng.integers(0, len(centres), size=n)
    z = centres[cluster]
    a = z @ ma.T + noise * rng.normal(size=(n, ma.shape[0]))
    b = z @ mb.T + noise * rng.normal(size=(n, mb.shape[0]))
    return PairData(a, b, cluster), maps


def _distinct_group(cluster: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """``d`` indices with pairwise different clusters, so each query has one positive."""
    chosen, seen = [], set()
    for i in rng.permutation(len(cluster)):
        if cluster[i] not in seen:
            seen.add(cluster[i])
            chosen.append(i)
            if len(chosen) == d:
                return np.array(chosen)
    raise ValueError("not enough distinct clusters for a group")


# evaluation


def evaluate(task: str, model, data, d: int, groups: np.ndarray | None = None) -> dict[str, float]:
    """Exact metrics for a scorer on a dataset; no tape is recorded."""
    with T.no_grad():
        if task == "spearman_toy":
            pred = model(data.features).data
            rows = groups if groups is not None else np.arange(len(pred) // d * d).reshape(-1, d)
            return {"spearman": float(np.mean([spearman(pred[g], data.target[g]) for g in rows]))}
        if task == "map_toy":
            scores = model(data.features).data
            keep = data.labels.sum(axis=0) > 0
            return {"map": mean_average_precision(scores.T[keep], data.labels.T[keep])}
        if task == "retrieval_toy":
            r1, r5 = [], []
            for g in groups:
                batch = GroupBatch(model(data.view_a[g], data.view_b[g]).data, np.arange(len(g)))
                r1.append(recall_at_k(batch, 1))
                r5.append(recall_at_k(batch, min(5, len(g))))
            return {"r@1": float(np.mean(r1)), "r@5": float(np.mean(r5))}
    raise ValueError(f"unknown task {task!r}")


# training


def _bce(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Binary cross-entropy on logits: softplus(-s) for positives, softplus(s) otherwise."""
    sign = np.where(labels > 0, -1.0, 1.0)
    return T.mean(T.softplus(scores * sign))


class _Frozen:
    """Put the sorter in eval mode, frozen when asked, and restore it afterwards."""

    def __init__(self, sorter: Sorter | None, freeze: bool):
        self.sorter, self.freeze = sorter, freeze

    def __enter__(self):
        if self.sorter is not None:
            self.was_training = self.sorter.training
            self.flags = {k: p.requires_grad for k, p in self.sorter.params.items()}
            self.sorter.eval()
            if self.freeze:
                self.sorter.freeze()
        return self

    def __exit__(self, *exc):
        if self.sorter is not None:
            self.sorter.train(self.was_training)
            for k, flag in self.flags.items():
                self.sorter.params[k].requires_grad_(flag)
        return False


def train_downstream(
    task: str,
    sorter: Sorter | None,
    loss_cfg: LossConfig | None = None,
    cfg: ToyConfig | None = None,
    objective: str = "rank",
) -> tuple[object, TrainReport]:
    """Train the task's scorer through ``sorter`` and return (model, report).

    ``objective="bce"`` trains the mAP task with cross-entropy instead and
    ignores the sorter. ``report.heldout`` holds the task's main exact metric
    on the test split after every epoch; other metrics go to ``report.extra``.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if objective not in ("rank", "bce"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "bce" and task != "map_toy":
        raise ValueError("the cross-entropy baseline exists only for map_toy")
    if objective == "rank" and sorter is None:
        raise ValueError("a sorter is needed for the rank objective")
    loss_cfg = loss_cfg or LossConfig()
    cfg = cfg or ToyConfig()
    d = loss_cfg.d
    if sorter is not None and sorter.kind not in ("handcrafted", "exact") and sorter.d != d:
        raise ValueError(f"sorter was trained for d={sorter.d}, task groups have d={d}")

    data_seed, init_seed, batch_seed = split_seed(cfg.seed, 3)
    data_rng, init_rng, batch_rng = make_rng(data_seed), make_rng(init_seed), make_rng(batch_seed)
    metric = {"spearman_toy": "spearman", "map_toy": "map", "retrieval_toy": "r@1"}[task]
    n_train = 4000
    test_groups = None
    if task == "spearman_toy":
        train, w = spearman_data(n_train, data_rng)
        test, _ = spearman_data(cfg.n_test_groups * d, data_rng, w=w)
        model = Mlp(train.features.shape[1], 16, init_rng)
    elif task == "map_toy":
        train, w, b = map_data(n_train, cfg.n_classes, data_rng)
        test, _, _ = map_data(1000, cfg.n_classes, data_rng, w=w, b=b)
        model = Linear(train.features.shape[1], cfg.n_classes, init_rng)
    else:
        train, maps = retrieval_data(n_train, data_rng)
        test, _ = retrieval_data(n_train, data_rng, maps=maps)
        test_groups = [_distinct_group(test.cluster, d, data_rng) for _ in range(cfg.n_test_groups)]
        model = DualEncoder(train.view_a.shape[1], train.view_b.shape[1], 16, init_rng)

    trainable = dict(model.params)
    if sorter is not None and not cfg.freeze_sorter and objective == "rank":
        trainable.update({f"sorter.{k}": p for k, p in sorter.params.items()})
    opt = Adam(trainable, lr=cfg.lr)
    report = TrainReport(
        metric=metric,
        config={"task": task, "objective": objective, "loss": asdict(loss_cfg), "toy": asdict(cfg)},
    )
    started = time.perf_counter()
    with _Frozen(sorter, cfg.freeze_sorter):
        for epoch in range(cfg.epochs):
            opt.lr = lr_schedule(epoch, cfg.lr, cfg.halving_period)
            losses = []
            for _ in range(cfg.steps_per_epoch):
                opt.zero_grad()
                loss = _step_loss(task, objective, model, train, sorter, loss_cfg, cfg, batch_rng, epoch)
                T.backward(loss)
                opt.step()
                losses.append(float(loss.data))
            scores = evaluate(task, model, test, d, test_groups)
            report.train_loss.append(float(np.mean(losses)))
            report.heldout.append(scores[metric])
            for k, v in scores.items():
                report.extra.setdefault(k, []).append(v)
            log.info("%s/%s epoch %d: loss %.5f %s %.4f", task, objective, epoch + 1, report.train_loss[-1], metric, scores[metric])
    report.wall_clock = time.perf_counter() - started
    return model, report


def _step_loss(task, objective, model, train, sorter, loss_cfg, cfg, rng, epoch) -> Tensor:
    d = loss_cfg.d
    n = cfg.groups_per_step
    if task == "spearman_toy":
        idx = rng.integers(0, len(train.target), size=(n, d))
        scores = model(train.features[idx])
        loss = spearman_loss(scores, train.target[idx], sorter)
        # the raw targets double as the alignment signal
        return aligned_loss(loss, scores, train.target[idx], loss_cfg.aux_weight, loss_cfg.aux_kind, loss_cfg.aux_schedule, epoch)
    if task == "map_toy":
        idx = rng.choice(len(train.labels), size=d, replace=False)
        scores = model(train.features[idx])
        labels = train.labels[idx]
        if objective == "bce":
            return _bce(scores, labels)
        keep = np.flatnonzero(labels.sum(axis=0) > 0)
        return map_loss(T.transpose(scores)[keep], labels.T[keep], sorter)
    total = None
    for _ in range(n):
        g = _distinct_group(train.cluster, d, rng)
        loss = recall_loss(model(train.view_a[g], train.view_b[g]), np.arange(d), loss_cfg.margin, sorter)
        total = loss if total is None else total + loss
    return T.scale(total, 1.0 / n)
