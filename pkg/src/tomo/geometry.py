from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import GeometryError
from src.core.phantom import inscribed_mask


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam geometry for an N x N image: N detectors at unit spacing, angles in degrees.

    Detector k sits at offset s_k = k - (N-1)/2. Only the inscribed circle is reconstructable.
    """

    size: int
    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.size < 1:
            raise GeometryError(f"image size must be positive, got {self.size}")
        if not self.angles:
            raise GeometryError("empty angle list")
        arr = np.asarray(self.angles, dtype=np.float64)
        if np.any(arr < 0.0) or np.any(arr >= 180.0):
            raise GeometryError("projection angles must lie in [0, 180)")
        if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
            raise GeometryError("projection angles must be strictly increasing")

    @classmethod
    def create(cls, size: int, angles: np.ndarray | list[float]) -> "Geometry":
        return cls(size=int(size), angles=tuple(float(a) for a in np.asarray(angles, dtype=np.float64).reshape(-1)))

    @property
    def detectors(self) -> int:
        return self.size

    @property
    def views(self) -> int:
        return len(self.angles)

    @property
    def center(self) -> float:
        return (self.size - 1) / 2.0

    def angle_array(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=np.float64)

    def mask(self) -> np.ndarray:
        return inscribed_mask(self.size)


class SartConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    iters: int = Field(default=300, gt=0)
    tv_w: float = Field(default=0.1, ge=0.0)
    tv_maxit: int = Field(default=1000, gt=0)
    tv_eps: float = Field(default=4e-5, gt=0.0)
    relaxation: float = Field(default=0.2, gt=0.0, lt=2.0)


__all__ = ["Geometry", "SartConfig"]
