"""Elementwise, reduction and structural tensor operators.

Binary ops accept identical shapes only; scalars go through ``scalar_mul`` and
``add_scalar``. The two gate ops cover the broadcasts the attention blocks need.
"""

from __future__ import annotations

from typing import Callable, Literal, Sequence

import numpy as np

from src.core.errors import ShapeError
from src.autodiff.tensor import Tensor


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return Tensor.from_op(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return Tensor.from_op(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return Tensor.from_op(a.data * b.data, (a, b), "mul", lambda g: (g * b.data, g * a.data))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("div", a, b)
    out = a.data / b.data
    return Tensor.from_op(out, (a, b), "div", lambda g: (g / b.data, -g * out / b.data))


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), "neg", lambda g: (-g,))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return Tensor.from_op(a.data * c, (a,), "scalar_mul", lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return Tensor.from_op(a.data + c, (a,), "add_scalar", lambda g: (g,))


def square(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data * a.data, (a,), "square", lambda g: (2.0 * g * a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor.from_op(out, (a,), "sqrt", lambda g: (g / (2.0 * out),))


def log(a: Tensor) -> Tensor:
    return Tensor.from_op(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def abs_(a: Tensor) -> Tensor:
    return Tensor.from_op(np.abs(a.data), (a,), "abs", lambda g: (g * np.sign(a.data),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor.from_op(np.where(mask, a.data, 0.0).astype(a.dtype), (a,), "relu", lambda g: (g * mask,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return Tensor.from_op(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


# -- reductions (results have shape (1,)) --------------------------------------

def sum_(a: Tensor) -> Tensor:
    out = np.array([a.data.sum()], dtype=a.dtype)
    return Tensor.from_op(out, (a,), "sum", lambda g: (np.full(a.shape, g[0], dtype=a.dtype),))


def mean(a: Tensor) -> Tensor:
    n = a.numel
    out = np.array([a.data.mean()], dtype=a.dtype)
    return Tensor.from_op(out, (a,), "mean", lambda g: (np.full(a.shape, g[0] / n, dtype=a.dtype),))


def abs_sum(a: Tensor) -> Tensor:
    out = np.array([np.abs(a.data).sum()], dtype=a.dtype)
    return Tensor.from_op(out, (a,), "abs_sum", lambda g: (g[0] * np.sign(a.data),))


# -- structural ----------------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc
    return Tensor.from_op(out, (a,), "reshape", lambda g: (g.reshape(a.shape),))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not xs:
        raise ShapeError("concat of an empty list")
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != axis % len(ref)):
            raise ShapeError(f"concat: incompatible shapes {xs[0].shape} and {x.shape}")
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=axis)
    return Tensor.from_op(out, tuple(xs), "concat", lambda g: tuple(np.split(g, bounds, axis=axis)))


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> list[Tensor]:
    if sum(sizes) != a.shape[axis] or any(s <= 0 for s in sizes):
        raise ShapeError(f"split sizes {list(sizes)} do not partition axis of length {a.shape[axis]}")
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return [slice_axis(a, axis, int(s), int(s + n)) for s, n in zip(starts, sizes)]


def channel_split(a: Tensor, fractions: Sequence[float] = (0.5, 0.5)) -> list[Tensor]:
    channels = a.shape[1]
    sizes = [int(round(f * channels)) for f in fractions]
    if abs(sum(fractions) - 1.0) > 1e-12 or sum(sizes) != channels or any(
        abs(s - f * channels) > 1e-9 for s, f in zip(sizes, fractions)
    ):
        raise ShapeError(f"fractions {list(fractions)} do not split {channels} channels exactly")
    return split(a, sizes, axis=1)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.ndim
    if not 0 <= start < stop <= a.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis of length {a.shape[axis]}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    idx = tuple(index)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(a.shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return Tensor.from_op(a.data[idx], (a,), "slice", backward)


def channel_shuffle(a: Tensor, groups: int) -> Tensor:
    n, c, h, w = a.shape
    if groups < 1 or c % groups != 0:
        raise ShapeError(f"{c} channels are not divisible into {groups} shuffle groups")
    out = a.data.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(n, c // groups, groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w),)

    return Tensor.from_op(out, (a,), "channel_shuffle", backward)


def swap_hw(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data.transpose(0, 1, 3, 2), (a,), "swap_hw", lambda g: (g.transpose(0, 1, 3, 2),))


def pool_axis(a: Tensor, axis: Literal["H", "W"]) -> Tensor:
    """Mean over one spatial axis with the axis kept: "W" gives (N,C,H,1), "H" gives (N,C,1,W)."""
    if axis not in ("H", "W"):
        raise ShapeError(f"pool axis must be 'H' or 'W', got {axis!r}")
    dim = 3 if axis == "W" else 2
    length = a.shape[dim]
    out = a.data.mean(axis=dim, keepdims=True)
    return Tensor.from_op(out, (a,), f"pool_{axis}", lambda g: (np.broadcast_to(g / length, a.shape).copy(),))


def global_avg_pool(a: Tensor) -> Tensor:
    n, c, h, w = a.shape
    out = a.data.mean(axis=(2, 3), keepdims=True)
    return Tensor.from_op(out, (a,), "global_avg_pool", lambda g: (np.broadcast_to(g / (h * w), a.shape).copy(),))


# -- gates -----------------------------------------------------------------------

def coord_gate(x: Tensor, gate_h: Tensor, gate_w: Tensor) -> Tensor:
    """y[n,c,i,j] = x[n,c,i,j] * gate_h[n,c,i,0] * gate_w[n,c,0,j]."""
    n, c, h, w = x.shape
    if gate_h.shape != (n, c, h, 1) or gate_w.shape != (n, c, 1, w):
        raise ShapeError(f"coordinate gates {gate_h.shape}, {gate_w.shape} do not match input {x.shape}")
    scale = gate_h.data * gate_w.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gx = g * x.data
        return (
            g * scale,
            (gx * gate_w.data).sum(axis=3, keepdims=True),
            (gx * gate_h.data).sum(axis=2, keepdims=True),
        )

    return Tensor.from_op(x.data * scale, (x, gate_h, gate_w), "coord_gate", backward)


def channel_gate(x: Tensor, gate: Tensor) -> Tensor:
    """y[n,c,i,j] = x[n,c,i,j] * gate[n,c,0,0]."""
    n, c = x.shape[:2]
    if gate.shape != (n, c, 1, 1):
        raise ShapeError(f"channel gate {gate.shape} does not match input {x.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g * gate.data, (g * x.data).sum(axis=(2, 3), keepdims=True)

    return Tensor.from_op(x.data * gate.data, (x, gate), "channel_gate", backward)


# -- external linear maps -----------------------------------------------------------

def linear_op(
    x: Tensor,
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    name: str = "linear_op",
) -> Tensor:
    """Wrap a numpy linear operator; its adjoint supplies the vector-Jacobian product."""
    out = np.asarray(forward(x.data), dtype=x.dtype)
    return Tensor.from_op(out, (x,), name, lambda g: (np.asarray(adjoint(g), dtype=x.dtype),))


__all__ = [
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scalar_mul",
    "add_scalar",
    "square",
    "sqrt",
    "log",
    "abs_",
    "relu",
    "sigmoid",
    "sum_",
    "mean",
    "abs_sum",
    "reshape",
    "concat",
    "split",
    "channel_split",
    "slice_axis",
    "channel_shuffle",
    "swap_hw",
    "pool_axis",
    "global_avg_pool",
    "coord_gate",
    "channel_gate",
    "linear_op",
]
