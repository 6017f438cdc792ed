"""Dense reverse-mode autodiff on top of numpy.

Every op builds its output eagerly and records a backward closure together
with its parents. Nodes carry a monotonically increasing ``node_id``, so the
creation order is already a topological order of the graph; ``backward``
replays the reachable part of that tape in reverse.

All values are float64. A leading batch axis is allowed everywhere, which is
how the sorters get trained on mini-batches.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

__all__ = [
    "ShapeError",
    "Tensor",
    "tensor",
    "constant",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "abs",
    "square",
    "sqrt",
    "exp",
    "log",
    "softplus",
    "relu",
    "sigmoid",
    "tanh",
    "activation",
    "elementwise",
    "sum",
    "mean",
    "max",
    "reduce",
    "affine",
    "matmul",
    "conv1d",
    "BatchNormState",
    "batchnorm1d",
    "concat",
    "stack",
    "reverse",
    "reshape",
    "transpose",
    "backward",
    "grad_check",
]

_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the tape."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus an optional gradient slot.

    Leaves created with ``requires_grad=True`` are parameters: ``backward``
    accumulates into their ``grad``. Everything else is either an interior
    node of the current tape or a constant (``node_id is None``).
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids) if requires_grad else None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    @property
    def tape_id(self):
        return "constant" if self.node_id is None else self.node_id

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def requires_grad_(self, flag: bool = True) -> Tensor:
        """Turn a leaf into a parameter (or back into a constant)."""
        if self._parents:
            raise RuntimeError("only leaf tensors can change requires_grad")
        self.requires_grad = bool(flag)
        self.node_id = next(_ids) if flag else None
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None):
        return max(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data.data if isinstance(data, Tensor) else data)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    live = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = live
    if live:
        out.node_id = next(_ids)
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.node_id = None
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise algebra
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("add", a, b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("sub", a, b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("mul", a, b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = _lift(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, s: float) -> Tensor:
    a = _lift(a)
    s = float(s)
    return _node(a.data * s, (a,), lambda g: (g * s,), "scale")


def abs(a) -> Tensor:  # noqa: A001
    a = _lift(a)
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def square(a) -> Tensor:
    a = _lift(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = _lift(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _lift(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softplus(a) -> Tensor:
    """log(1 + e^x), stable for large |x|."""
    a = _lift(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _node(out, (a,), lambda g: (g * _sigmoid(x),), "softplus")


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Tensor:
    a = _lift(a)
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}
_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scale": scale,
    "abs": lambda a, b=None: abs(a),
    "square": lambda a, b=None: square(a),
}


def activation(x, kind: str) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def elementwise(a, b=None, kind: str = "add") -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {kind!r}") from None
    return fn(a, b)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _check_nonempty(op: str, x: Tensor) -> None:
    if x.size == 0:
        raise ShapeError(f"{op} of an empty tensor")


def _expand_grad(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _lift(x)
    _check_nonempty("sum", x)
    return _node(
        np.sum(x.data, axis=axis, keepdims=keepdims),
        (x,),
        lambda g: (_expand_grad(g, x.shape, axis, keepdims).copy(),),
        "sum",
    )


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    _check_nonempty("mean", x)
    n = x.size / np.mean(x.data, axis=axis, keepdims=keepdims).size
    return _node(
        np.mean(x.data, axis=axis, keepdims=keepdims),
        (x,),
        lambda g: (_expand_grad(g, x.shape, axis, keepdims) / n,),
        "mean",
    )


def max(x, axis: int | None = None) -> Tensor:  # noqa: A001
    """Max reduction; the gradient goes to the first (lowest-index) maximiser."""
    x = _lift(x)
    _check_nonempty("max", x)
    if axis is None:
        flat = int(np.argmax(x.data))

        def back(g):
            out = np.zeros(x.size)
            out[flat] = g
            return (out.reshape(x.shape),)

        return _node(np.asarray(x.data.reshape(-1)[flat]), (x,), back, "max")

    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)

    def back_axis(g):
        out = np.zeros(x.shape)
        np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _node(np.take_along_axis(x.data, idx, axis=axis).squeeze(axis), (x,), back_axis, "max")


def reduce(x, kind: str, axis=None) -> Tensor:
    if kind == "sum":
        return sum(x, axis=axis)
    if kind == "mean":
        return mean(x, axis=axis)
    if kind == "max":
        return max(x, axis=axis)
    raise ValueError(f"unknown reduction {kind!r}")


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------


def affine(x, W, b=None) -> Tensor:
    """``x @ W.T + b`` over the last axis of ``x`` (W is out x in)."""
    x, W = _lift(x), _lift(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: input {x.shape} does not match weight {W.shape}")
    if b is not None:
        b = _lift(b)
        if b.shape != (W.shape[0],):
            raise ShapeError(f"affine: bias {b.shape} does not match weight {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data

    def back(g):
        gx = g @ W.data
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gW = g2.T @ x2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _node(out, parents, back, "affine")


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), back, "matmul")


def conv1d(x, kernels, bias=None, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding.

    ``x`` is ``(c_in, L)`` or ``(batch, c_in, L)``; ``kernels`` is
    ``(c_out, c_in, k)``. Output length is ``L + 2*padding - k + 1``.
    """
    x, K = _lift(x), _lift(kernels)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 3 or K.ndim != 3 or xd.shape[1] != K.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernels {K.shape}")
    c_out, c_in, k = K.shape
    L = xd.shape[2]
    if k > L + 2 * padding:
        raise ShapeError(f"conv1d: kernel width {k} exceeds padded length {L + 2 * padding}")
    if bias is not None:
        bias = _lift(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv1d: bias {bias.shape} does not match {c_out} output channels")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, k, axis=2)  # (B, c_in, L_out, k)
    L_out = win.shape[2]
    out = np.einsum("bclk,ock->bol", win, K.data, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None]

    def back(g):
        g3 = g[None] if unbatched else g
        gK = np.einsum("bol,bclk->ock", g3, win, optimize=True)
        gwin = np.einsum("bol,ock->bclk", g3, K.data, optimize=True)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, :, j : j + L_out] += gwin[..., j]
        gx = gxp[:, :, padding : padding + L] if padding else gxp
        if unbatched:
            gx = gx[0]
        grads = [gx, gK]
        if bias is not None:
            grads.append(g3.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, K) if bias is None else (x, K, bias)
    return _node(out[0] if unbatched else out, parents, back, "conv1d")


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    num_batches: int = 0
    loaded: bool = False

    @classmethod
    def create(cls, channels: int) -> BatchNormState:
        return cls(np.zeros(channels), np.ones(channels))

    @property
    def ready(self) -> bool:
        return self.num_batches > 0 or self.loaded


def batchnorm1d(
    x,
    gamma,
    beta,
    state: BatchNormState,
    training: bool = True,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel normalisation of ``(c, L)`` or ``(batch, c, L)`` input.

    In training mode the statistics come from the current input (length and
    batch axes) and are differentiated through; the running averages use the
    unbiased variance. Eval mode uses the running averages as constants.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.ndim not in (2, 3):
        raise ShapeError(f"batchnorm1d expects (c, L) or (B, c, L), got {x.shape}")
    c = x.shape[-2]
    if gamma.shape != (c,) or beta.shape != (c,) or state.running_mean.shape != (c,):
        raise ShapeError(f"batchnorm1d: {c} channels but parameters/state disagree")
    axes = (1,) if x.ndim == 2 else (0, 2)
    xd = x.data
    gd = gamma.data[:, None]

    if training:
        n = xd.size // c
        mu = xd.mean(axis=axes, keepdims=True)
        var = xd.var(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xd - mu) * inv
        unbiased = var.reshape(c) * (n / (n - 1)) if n > 1 else var.reshape(c)
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mu.reshape(c)
        state.running_var = (1 - momentum) * state.running_var + momentum * unbiased
        state.num_batches += 1

        def back(g):
            gxhat = g * gd
            gx = inv / n * (
                n * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    else:
        if not state.ready:
            raise RuntimeError("batchnorm1d: eval mode needs running statistics (train first or load them)")
        inv = 1.0 / np.sqrt(state.running_var[:, None] + eps)
        xhat = (xd - state.running_mean[:, None]) * inv

        def back(g):
            return g * gd * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = xhat * gd + beta.data[:, None]
    return _node(out, (x, gamma, beta), back, "batchnorm1d")


# ---------------------------------------------------------------------------
# shape and sequence ops
# ---------------------------------------------------------------------------


def _getitem(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        index = index.data.astype(np.intp)
    try:
        out = x.data[index]
    except IndexError as exc:
        raise ShapeError(f"index {index!r} out of bounds for shape {x.shape}") from exc

    basic = not any(isinstance(i, (np.ndarray, list)) for i in (index if isinstance(index, tuple) else (index,)))

    def back(g):
        return (_SliceGrad(index, g, basic),)

    return _node(np.asarray(out, dtype=np.float64), (x,), back, "slice")


class _SliceGrad:
    """Gradient that is non-zero only at ``index``; scattered by ``backward``."""

    __slots__ = ("index", "values", "basic")

    def __init__(self, index, values, basic):
        self.index, self.values, self.basic = index, values, basic

    def add_into(self, buf: np.ndarray) -> None:
        if self.basic:
            buf[self.index] += self.values
        else:
            np.add.at(buf, self.index, self.values)


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    ax = axis % out.ndim
    cuts = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _node(out, ts, lambda g: tuple(np.split(g, cuts, axis=ax)), "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None
    ax = axis % out.ndim
    return _node(
        out,
        ts,
        lambda g: tuple(np.moveaxis(g, ax, 0)),
        "stack",
    )


def reverse(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    return _node(np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis),), "reverse")


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return _node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = _lift(x)
    inv = None if axes is None else np.argsort(axes)
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _collect(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes = []
    todo = [root]
    while todo:
        t = todo.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen.add(id(t))
        nodes.append(t)
        todo.extend(t._parents)
    nodes.sort(key=lambda t: t.node_id, reverse=True)
    return nodes


def backward(loss: Tensor, seed: float = 1.0) -> list[Tensor]:
    """Reverse-mode sweep from a scalar; returns the leaves that received grad.

    Leaf gradients accumulate across calls until ``zero_grad``.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar seed, got shape {loss.shape}")
    if not loss.requires_grad:
        return []
    grads: dict[int, np.ndarray] = {id(loss): np.full(loss.shape, float(seed))}
    # buffers allocated here may be updated in place; others may alias op outputs
    owned: set[int] = {id(loss)}
    leaves = []
    for node in _collect(loss):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            leaves.append(node)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if isinstance(pg, _SliceGrad):
                if key not in grads:
                    grads[key] = np.zeros(parent.shape)
                    owned.add(key)
                elif key not in owned:
                    grads[key] = grads[key].copy()
                    owned.add(key)
                pg.add_into(grads[key])
                continue
            pg = np.asarray(pg)
            if key not in grads:
                grads[key] = pg if pg.shape == parent.shape else np.reshape(pg, parent.shape)
            elif key in owned:
                grads[key] += pg
            else:
                grads[key] = grads[key] + pg
                owned.add(key)
    return leaves


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` must return a scalar tensor. Inputs sitting on a kink (relu at 0,
    tied maxima) are not meaningful here; callers keep away from them.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    backward(f(xt))
    analytic = np.zeros_like(x0) if xt.grad is None else xt.grad
    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            xp = flat.copy()
            xp[i] += h
            xm = flat.copy()
            xm[i] -= h
            fp = f(Tensor(xp.reshape(x0.shape))).item()
            fm = f(Tensor(xm.reshape(x0.shape))).item()
            numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
