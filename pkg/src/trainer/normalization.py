from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from src.core.errors import InvalidContainerError
from src.autodiff import ops
from src.autodiff.tensor import Tensor


@dataclass(frozen=True)
class DomainNorm:
    """Affine map x -> (x - shift) / scale fitted on the training split of one domain."""

    shift: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, arrays: Iterable[np.ndarray]) -> "DomainNorm":
        stacked = np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1) for a in arrays])
        std = float(stacked.std())
        return cls(shift=float(stacked.mean()), scale=std if std > 0.0 else 1.0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift) / self.scale

    def invert(self, y: np.ndarray) -> np.ndarray:
        return y * self.scale + self.shift

    def apply_tensor(self, x: Tensor) -> Tensor:
        return ops.scalar_mul(ops.add_scalar(x, -self.shift), 1.0 / self.scale)

    def invert_tensor(self, y: Tensor) -> Tensor:
        return ops.add_scalar(ops.scalar_mul(y, self.scale), self.shift)

    def entry(self, domain: str) -> tuple[str, np.ndarray]:
        return f"norm.{domain}", np.array([self.shift, self.scale], dtype=np.float64)

    @classmethod
    def from_entries(cls, entries: Mapping[str, np.ndarray], domain: str) -> "DomainNorm":
        key = f"norm.{domain}"
        if key not in entries:
            raise InvalidContainerError(f"container lacks normalization entry {key!r}")
        shift, scale = np.asarray(entries[key], dtype=np.float64).reshape(-1)[:2]
        return cls(shift=float(shift), scale=float(scale))


__all__ = ["DomainNorm"]
