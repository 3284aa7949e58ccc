"""Define-by-run reverse-mode tensors on top of numpy arrays."""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from src.core.errors import UsageError


_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)
_default_dtype: ContextVar[np.dtype] = ContextVar("default_dtype", default=np.dtype(np.float32))

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Skip graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def get_default_dtype() -> np.dtype:
    return _default_dtype.get()


@contextmanager
def default_dtype(dtype: np.dtype | type) -> Iterator[None]:
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"unsupported tensor dtype {resolved}")
    token = _default_dtype.set(resolved)
    try:
        yield
    finally:
        _default_dtype.reset(token)


@dataclass(frozen=True)
class Node:
    """Backward-graph record: op tag, parent tensors and the vector-Jacobian product."""

    op: str
    parents: tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    def __init__(self, data: np.ndarray | float | Sequence[float], requires_grad: bool = False, dtype: np.dtype | type | None = None) -> None:
        if dtype is None:
            src = np.asarray(data)
            dtype = src.dtype if src.dtype in (np.float32, np.float64) else get_default_dtype()
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._node: Optional[Node] = None

    # -- metadata ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def numel(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def op(self) -> Optional[str]:
        return None if self._node is None else self._node.op

    def item(self) -> float:
        if self.numel != 1:
            raise UsageError(f"item() on a tensor with {self.numel} elements")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self._node else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{tag})"

    # -- graph --------------------------------------------------------------
    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str, backward: BackwardFn) -> "Tensor":
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._node = Node(op=op, parents=tuple(parents), backward=backward)
        return out

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires grad."""
        if self.numel != 1:
            raise UsageError(f"backward() needs a single-element root, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for parent in reversed(t._node.parents):
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._node is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            for parent, pg in zip(t._node.parents, t._node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.dtype)
                if pg.shape != parent.shape:
                    raise UsageError(f"{t._node.op} backward produced {pg.shape} for a {parent.shape} input")
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- operator sugar (delegates to src.autodiff.ops) ---------------------
    def __add__(self, other: "Tensor | float") -> "Tensor":
        from src.autodiff import ops

        return ops.add(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        from src.autodiff import ops

        return ops.sub(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, -float(other))

    def __rsub__(self, other: float) -> "Tensor":
        from src.autodiff import ops

        return ops.add_scalar(ops.neg(self), float(other))

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        from src.autodiff import ops

        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scalar_mul(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: "Tensor | float") -> "Tensor":
        from src.autodiff import ops

        return ops.div(self, other) if isinstance(other, Tensor) else ops.scalar_mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from src.autodiff import ops

        return ops.neg(self)


def as_tensor(value: "Tensor | np.ndarray | float") -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


__all__ = [
    "Tensor",
    "Node",
    "no_grad",
    "is_grad_enabled",
    "default_dtype",
    "get_default_dtype",
    "as_tensor",
]
