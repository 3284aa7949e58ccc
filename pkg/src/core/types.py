from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import GeometryError, InvalidSpecError


# filtering leaves tiny negative line integrals; use sites clamp them
SINOGRAM_NEGATIVE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Image:
    """Square or rectangular attenuation grid, row 0 at the top."""

    pixels: np.ndarray
    spacing: float = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidSpecError(f"image must be a non-empty 2-D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpecError("image contains non-finite values")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def is_square(self) -> bool:
        return self.height == self.width


@dataclass(frozen=True)
class Sinogram:
    """Views x detectors line integrals with their view angles in degrees.

    Angles normally lie in [0, 180). Angle-axis padding (see ``pad_views``)
    continues the list periodically, so padded sinograms carry angles up to 360.
    """

    angles: np.ndarray
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise GeometryError(f"sinogram samples must be 2-D, got shape {samples.shape}")
        if samples.shape[0] != angles.size:
            raise GeometryError(f"{samples.shape[0]} sample rows for {angles.size} angles")
        if angles.size and (np.any(angles < 0.0) or np.any(angles >= 360.0)):
            raise GeometryError("view angles must lie in [0, 360)")
        if angles.size > 1 and np.any(np.diff(angles) <= 0.0):
            raise GeometryError("view angles must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise GeometryError("sinogram contains non-finite values")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "samples", samples)

    @property
    def views(self) -> int:
        return int(self.samples.shape[0])

    @property
    def detectors(self) -> int:
        return int(self.samples.shape[1])


class PhantomSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["shepp-logan", "random-ellipses"] = "shepp-logan"
    size: int = Field(default=64, ge=16)
    ellipse_count: int = Field(default=8, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


def uniform_angles(views: int, span: float = 180.0) -> np.ndarray:
    """``views`` equally spaced angles starting at 0 over ``span`` degrees."""
    return np.arange(views, dtype=np.float64) * (span / views)


__all__ = ["Image", "Sinogram", "PhantomSpec", "uniform_angles", "SINOGRAM_NEGATIVE_TOLERANCE"]
