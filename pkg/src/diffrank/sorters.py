"""Differentiable rank surrogates.

Three sorters share one interface: ``sorter(y)`` maps a ``(d,)`` or
``(batch, d)`` tensor of raw scores to predicted ranks of the same shape,
0 meaning "largest score". Learned sorters regress normalised ranks in
[0, 1]; the handcrafted one can emit either scale.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .metrics import exact_rank
from .tensor import BatchNormState, Tensor

__all__ = [
    "Sorter",
    "HandcraftedSorter",
    "CnnSorter",
    "LstmSorter",
    "ExactSorter",
    "LstmParams",
    "lstm_cell_step",
    "cnn_channel_schedule",
    "predict_rank",
    "build_sorter",
]


class Sorter:
    """Base class: named parameters, train/eval mode, freezing."""

    kind = "base"
    any_length = False

    def __init__(self, d: int):
        self.d = int(d)
        self.training = True
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}

    def __call__(self, y) -> Tensor:
        return self.forward(y)

    def forward(self, y) -> Tensor:
        raise NotImplementedError

    def hyperparameters(self) -> dict:
        return {}

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def train(self, mode: bool = True) -> Sorter:
        self.training = mode
        return self

    def eval(self) -> Sorter:
        return self.train(False)

    def freeze(self) -> Sorter:
        for p in self.params.values():
            p.requires_grad_(False)
        return self

    def unfreeze(self) -> Sorter:
        for p in self.params.values():
            p.requires_grad_(True)
        return self

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def _check_length(self, y: Tensor) -> None:
        if y.shape[-1] != self.d:
            raise ValueError(f"{self.kind} sorter was built for d={self.d}, got length {y.shape[-1]}")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class HandcraftedSorter(Sorter):
    """Sum of pairwise sigmoid comparisons; no parameters to learn.

    Entry ``i`` is ``sum_{j != i} sigmoid(lam * (y_j - y_i))``, which tends to
    the count of strictly larger entries as ``lam`` grows.
    """

    kind = "handcrafted"
    any_length = True

    def __init__(self, lam: float = 10.0, normalize: bool = True, d: int | None = None):
        if lam <= 0:
            raise ValueError("lam must be positive")
        super().__init__(d or 0)
        self.lam = float(lam)
        self.normalize = normalize

    def hyperparameters(self) -> dict:
        return {"lam": self.lam, "normalize": self.normalize}

    def forward(self, y) -> Tensor:
        y = T.tensor(y)
        d = y.shape[-1]
        rows = T.reshape(y, y.shape[:-1] + (d, 1))
        cols = T.reshape(y, y.shape[:-1] + (1, d))
        comp = T.sigmoid(T.scale(cols - rows, self.lam))
        # the j == i term is sigmoid(0) = 0.5
        out = T.sum(comp, axis=-1) - 0.5
        if self.normalize:
            out = T.scale(out, 1.0 / (d - 1))
        return out


def cnn_channel_schedule(d: int, depth: int) -> list[int]:
    """Output channels per block: a doubling ramp from 8, then ``d``.

    The ramp takes ``min(4, depth // 2)`` blocks, so depth 8 gives
    8, 16, 32, 64, d, d, d, d.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    ramp = min(4, depth // 2)
    return [8 * 2**i for i in range(ramp)] + [d] * (depth - ramp)


class CnnSorter(Sorter):
    """Stack of (conv1d, batchnorm, relu) blocks, flattened into an affine map."""

    kind = "cnn"

    def __init__(
        self, d: int, depth: int = 8, kernel_width: int = 3, channels=None, standardize: bool = False, seed: int = 0
    ):
        super().__init__(d)
        self.standardize = standardize
        if kernel_width % 2 != 1:
            raise ValueError("kernel_width must be odd to preserve length")
        self.depth = depth
        self.kernel_width = kernel_width
        self.channels = list(channels) if channels is not None else cnn_channel_schedule(d, depth)
        if len(self.channels) != depth:
            raise ValueError("need one channel count per block")
        rng = np.random.Generator(np.random.Philox(seed))
        c_in = 1
        for i, c_out in enumerate(self.channels):
            fan_in = c_in * kernel_width
            self.params[f"conv{i}.weight"] = _uniform(rng, (c_out, c_in, kernel_width), fan_in)
            self.params[f"conv{i}.bias"] = _uniform(rng, (c_out,), fan_in)
            self.params[f"bn{i}.gamma"] = Tensor(np.ones(c_out), requires_grad=True)
            self.params[f"bn{i}.beta"] = Tensor(np.zeros(c_out), requires_grad=True)
            self.bn_states[f"bn{i}"] = BatchNormState.create(c_out)
            c_in = c_out
        fan_in = c_in * d
        self.params["fc.weight"] = _uniform(rng, (d, fan_in), fan_in)
        self.params["fc.bias"] = _uniform(rng, (d,), fan_in)
        # start at the mean normalised rank
        self.params["fc.bias"].data += 0.5

    def hyperparameters(self) -> dict:
        return {
            "depth": self.depth,
            "kernel_width": self.kernel_width,
            "channels": self.channels,
            "standardize": self.standardize,
        }

    def forward(self, y) -> Tensor:
        y = T.tensor(y)
        self._check_length(y)
        single = y.ndim == 1
        x = T.reshape(y, (1 if single else y.shape[0], self.d))
        if self.standardize:
            x = standardize(x)
        x = T.reshape(x, (x.shape[0], 1, self.d))
        pad = self.kernel_width // 2
        p = self.params
        for i in range(self.depth):
            x = T.conv1d(x, p[f"conv{i}.weight"], p[f"conv{i}.bias"], padding=pad)
            x = T.batchnorm1d(x, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], self.bn_states[f"bn{i}"], training=self.training)
            x = T.relu(x)
        x = T.reshape(x, (x.shape[0], -1))
        out = T.affine(x, p["fc.weight"], p["fc.bias"])
        return T.reshape(out, (self.d,)) if single else out


class LstmParams:
    """Weights of one LSTM direction; gate blocks ordered input, forget, output, candidate."""

    def __init__(self, w_ih: Tensor, w_hh: Tensor, bias: Tensor):
        self.w_ih, self.w_hh, self.bias = w_ih, w_hh, bias

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]


def lstm_cell_step(params: LstmParams, x_t, h_prev, c_prev, x_proj=None) -> tuple[Tensor, Tensor]:
    """One recurrence step; ``x_t`` is ``(batch, 1)``, states are ``(batch, H)``.

    ``x_proj`` may carry the precomputed input projection ``W_ih x_t + b``.
    """
    H = params.hidden_size
    if h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ValueError(f"state size does not match hidden size {H}")
    if x_proj is None:
        x_proj = T.affine(x_t, params.w_ih, params.bias)
    gates = x_proj + T.affine(h_prev, params.w_hh)
    sig = T.sigmoid(gates[..., : 3 * H])
    g = T.tanh(gates[..., 3 * H :])
    i, f, o = sig[..., :H], sig[..., H : 2 * H], sig[..., 2 * H :]
    c = f * c_prev + i * g
    h = o * T.tanh(c)
    return h, c


def standardize(y: Tensor, eps: float = 1e-8) -> Tensor:
    """Shift and scale each score vector to zero mean, unit variance.

    Ranks are invariant to this map, so it only removes nuisance scale.
    """
    centred = y - T.mean(y, axis=-1, keepdims=True)
    return centred / T.sqrt(T.mean(T.square(centred), axis=-1, keepdims=True) + eps)


class LstmSorter(Sorter):
    """Bidirectional LSTM over the scores, one affine readout per position.

    The recurrence does not depend on ``d``, so inputs of other lengths are
    accepted, but they are outside what the model was trained on.
    """

    kind = "lstm"

    def __init__(self, d: int, hidden_size: int = 128, num_layers: int = 1, standardize: bool = False, seed: int = 0):
        super().__init__(d)
        self.hidden_size = H = hidden_size
        self.num_layers = num_layers
        self.standardize = standardize
        rng = np.random.Generator(np.random.Philox(seed))
        n_in = 1
        for layer in range(num_layers):
            for name in self._directions(layer):
                self.params[f"{name}.w_ih"] = _uniform(rng, (4 * H, n_in), n_in)
                self.params[f"{name}.w_hh"] = _uniform(rng, (4 * H, H), H)
                b = _uniform(rng, (4 * H,), H)
                b.data[H : 2 * H] += 1.0
                self.params[f"{name}.bias"] = b
            n_in = 2 * H
        self.params["proj.weight"] = _uniform(rng, (1, 2 * H), 2 * H)
        self.params["proj.bias"] = _uniform(rng, (1,), 2 * H)
        self.params["proj.bias"].data += 0.5

    @staticmethod
    def _directions(layer: int) -> tuple[str, str]:
        # layer 0 keeps the short names
        return ("fwd", "bwd") if layer == 0 else (f"fwd{layer}", f"bwd{layer}")

    def hyperparameters(self) -> dict:
        return {"hidden_size": self.hidden_size, "num_layers": self.num_layers, "standardize": self.standardize}

    def direction(self, name: str) -> LstmParams:
        p = self.params
        return LstmParams(p[f"{name}.w_ih"], p[f"{name}.w_hh"], p[f"{name}.bias"])

    def _run(self, params: LstmParams, x: Tensor) -> Tensor:
        """``x`` is ``(batch, L, features)``; returns hidden states ``(batch, L, H)``."""
        B, L = x.shape[:2]
        proj = T.affine(x, params.w_ih, params.bias)
        h = c = T.constant(np.zeros((B, self.hidden_size)))
        hs = []
        for t in range(L):
            h, c = lstm_cell_step(params, None, h, c, x_proj=proj[:, t])
            hs.append(h)
        return T.stack(hs, axis=1)

    def forward(self, y) -> Tensor:
        y = T.tensor(y)
        single = y.ndim == 1
        x = T.reshape(y, (1, -1)) if single else y
        if self.standardize:
            x = standardize(x)
        L = x.shape[1]
        feats = T.reshape(x, (x.shape[0], L, 1))
        for layer in range(self.num_layers):
            fwd, bwd = self._directions(layer)
            h_fwd = self._run(self.direction(fwd), feats)
            h_bwd = T.reverse(self._run(self.direction(bwd), T.reverse(feats, axis=1)), axis=1)
            feats = T.concat([h_fwd, h_bwd], axis=-1)
        out = T.affine(feats, self.params["proj.weight"], self.params["proj.bias"])
        out = T.reshape(out, (x.shape[0], L))
        return T.reshape(out, (L,)) if single else out


class ExactSorter(Sorter):
    """The true normalised rank function wrapped as a (constant-output) sorter.

    It has no gradient and exists to evaluate losses against the ranks they
    approximate.
    """

    kind = "exact"
    any_length = True

    def __init__(self, d: int | None = None):
        super().__init__(d or 0)

    def forward(self, y) -> Tensor:
        y = T.tensor(y)
        return T.constant(exact_rank(y.data) / (y.shape[-1] - 1))


_KINDS = {"handcrafted": HandcraftedSorter, "cnn": CnnSorter, "lstm": LstmSorter}


def build_sorter(kind: str, d: int, **hyper) -> Sorter:
    if kind == "handcrafted":
        return HandcraftedSorter(d=d, **hyper)
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown sorter kind {kind!r}") from None
    return cls(d, **hyper)


def predict_rank(sorter: Sorter, y, batch_size: int = 4096) -> np.ndarray:
    """Inference-only ranks as a numpy array (eval mode, nothing recorded)."""
    y = np.asarray(y, dtype=np.float64)
    if not sorter.any_length and y.shape[-1] != sorter.d:
        raise ValueError(f"sorter expects length {sorter.d}, got {y.shape[-1]}")
    was_training = sorter.training
    sorter.eval()
    try:
        with T.no_grad():
            if y.ndim == 1:
                return sorter(y).data
            parts = [sorter(y[i : i + batch_size]).data for i in range(0, len(y), batch_size)]
            return np.concatenate(parts, axis=0)
    finally:
        sorter.train(was_training)


def handcrafted_error_bound(d: int, lam: float, gap: float) -> float:
    """Worst-case raw-rank error of the handcrafted sorter for min pairwise gap ``gap``."""
    return (d - 1) / (1.0 + np.exp(lam * gap))


def max_rank_error(sorter: Sorter, y) -> float:
    return float(np.max(np.abs(predict_rank(sorter, y) - exact_rank(y))))
