"""Adam, the step learning-rate schedule and the sorter pretraining loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import SorterCheckpoint, save_checkpoint
from .losses import sorter_l1_loss
from .sorters import Sorter, build_sorter, predict_rank
from .synth import GenConfig, batch_stream, make_rng, sample_batch, split_seed
from .tensor import Tensor

log = logging.getLogger(__name__)

REPORT_VERSION = 1
HELDOUT_SIZE = 10_000


class Adam:
    """Bias-corrected Adam over a name -> parameter mapping."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for k, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise FloatingPointError(f"non-finite gradient for {k!r} ({bad} entries) at step {self.t + 1}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: Adam) -> Adam:
    """Functional wrapper: apply one update to ``params`` using ``state``."""
    state.params = dict(params)
    for k, p in params.items():
        state.m.setdefault(k, np.zeros_like(p.data))
        state.v.setdefault(k, np.zeros_like(p.data))
    state.step(grads)
    return state


def lr_schedule(epoch: int, base_lr: float, period: int) -> float:
    """Halve ``base_lr`` every ``period`` epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * 0.5 ** (epoch // period)


@dataclass
class TrainConfig:
    epochs: int = 10
    pairs_per_epoch: int = 10_000
    batch_size: int = 512
    lr: float = 1e-3
    halving_period: int = 100
    seed: int = 0
    patience: int = 20
    heldout_size: int = HELDOUT_SIZE
    freeze_sorter: bool = True
    aux_schedule: str = "first_epoch_only"

    def __post_init__(self):
        for name in ("epochs", "pairs_per_epoch", "batch_size", "halving_period", "patience", "heldout_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def paper_scale(cls, **kw) -> TrainConfig:
        base = dict(epochs=1000, pairs_per_epoch=100_000, batch_size=512, lr=1e-3, halving_period=100)
        base.update(kw)
        return cls(**base)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    heldout: list[float] = field(default_factory=list)
    metric: str = "l1"
    wall_clock: float = 0.0
    checkpoint: str | None = None
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> float:
        return self.heldout[-1]

    @property
    def best(self) -> float:
        return min(self.heldout)

    def to_dict(self) -> dict:
        return {"format_version": REPORT_VERSION, **asdict(self)}

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> TrainReport:
        data = json.loads(Path(path).read_text())
        version = data.pop("format_version", None)
        if version != REPORT_VERSION:
            raise ValueError(f"unsupported report version {version!r}")
        return cls(**data)


def heldout_set(gen_cfg: GenConfig, n: int = HELDOUT_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Fixed evaluation pairs, drawn from a seed disjoint from the training stream."""
    return sample_batch(gen_cfg, make_rng(split_seed(gen_cfg.seed, 2)[1]), n)


def evaluate_sorter(sorter: Sorter, scores: np.ndarray, ranks: np.ndarray) -> float:
    """Mean absolute error between predicted and exact normalised ranks."""
    return float(np.mean(np.abs(predict_rank(sorter, scores) - ranks)))


def train_sorter(
    kind: str,
    gen_cfg: GenConfig,
    train_cfg: TrainConfig,
    out: str | Path | None = None,
    heldout: tuple[np.ndarray, np.ndarray] | None = None,
    **hyper,
) -> tuple[SorterCheckpoint, TrainReport]:
    """Fit a CNN or LSTM sorter with the L1 rank loss on a synthetic stream.

    Stops after ``train_cfg.epochs`` or once the held-out loss has not
    improved for ``patience`` epochs; the checkpoint holds the best epoch.
    """
    if kind not in ("cnn", "lstm"):
        raise ValueError(f"only learned sorters can be trained, got {kind!r}")
    started = time.perf_counter()
    sorter = build_sorter(kind, gen_cfg.d, seed=train_cfg.seed, **hyper)
    stream_seed = split_seed(gen_cfg.seed, 2)[0]
    stream = batch_stream(GenConfig(gen_cfg.d, stream_seed, gen_cfg.distribution, gen_cfg.mixture_weights), train_cfg.batch_size)
    hx, hy = heldout if heldout is not None else heldout_set(gen_cfg, train_cfg.heldout_size)
    opt = Adam(sorter.params, lr=train_cfg.lr)
    report = TrainReport(config={"kind": kind, "gen": asdict(gen_cfg), "train": asdict(train_cfg), "hyper": hyper})
    steps = max(1, round(train_cfg.pairs_per_epoch / train_cfg.batch_size))
    best, best_epoch, best_ckpt = np.inf, -1, None

    for epoch in range(train_cfg.epochs):
        opt.lr = lr_schedule(epoch, train_cfg.lr, train_cfg.halving_period)
        sorter.train()
        losses = []
        for _ in range(steps):
            ys, rs = next(stream)
            opt.zero_grad()
            loss = sorter_l1_loss(sorter(ys), rs)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"loss diverged at epoch {epoch + 1}")
            T.backward(loss)
            opt.step()
            losses.append(float(loss.data))
        held = evaluate_sorter(sorter, hx, hy)
        report.train_loss.append(float(np.mean(losses)))
        report.heldout.append(held)
        log.info("%s epoch %d: train %.5f held-out %.5f", kind, epoch + 1, report.train_loss[-1], held)
        if held < best:
            best, best_epoch = held, epoch
            best_ckpt = SorterCheckpoint.from_sorter(sorter)
        elif epoch - best_epoch >= train_cfg.patience:
            log.info("early stop after epoch %d (best %d)", epoch + 1, best_epoch + 1)
            break

    report.wall_clock = time.perf_counter() - started
    best_ckpt.metadata.update(
        {
            "epochs": len(report.heldout),
            "best_epoch": best_epoch + 1,
            "final_loss": best,
            "seed": train_cfg.seed,
            "gen_seed": gen_cfg.seed,
            "distribution": gen_cfg.distribution,
        }
    )
    if out is not None:
        report.checkpoint = str(save_checkpoint(best_ckpt, out))
    return best_ckpt, report
