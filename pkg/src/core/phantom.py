from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.core.errors import InvalidSpecError
from src.core.rng import Rng
from src.core.types import Image, PhantomSpec


logger = logging.getLogger(__name__)

# sub-pixel samples per axis; pixel values are area averages
OVERSAMPLE = 4


@dataclass(frozen=True)
class Ellipse:
    """Ellipse in normalized coordinates: the image square spans [-1, 1] on both axes, y up."""

    x0: float
    y0: float
    a: float
    b: float
    phi_deg: float
    value: float


# Modified (Toft) Shepp-Logan: additive intensities, values in [0, 1], peak 1.0 on the skull.
SHEPP_LOGAN: tuple[Ellipse, ...] = (
    Ellipse(0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    Ellipse(0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    Ellipse(0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    Ellipse(-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    Ellipse(0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    Ellipse(0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    Ellipse(0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    Ellipse(-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    Ellipse(0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
    Ellipse(0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)


def _subpixel_grid(size: int, oversample: int) -> tuple[np.ndarray, np.ndarray]:
    n = size * oversample
    centers = (np.arange(n, dtype=np.float64) + 0.5) / n * 2.0 - 1.0
    x = centers[np.newaxis, :]
    y = -centers[:, np.newaxis]
    return np.broadcast_to(x, (n, n)), np.broadcast_to(y, (n, n))


def render_ellipses(ellipses: Iterable[Ellipse], size: int, *, oversample: int = OVERSAMPLE) -> np.ndarray:
    """Additive ellipse rendering clipped to [0, 1] and to the inscribed circle."""
    x, y = _subpixel_grid(size, oversample)
    fine = np.zeros(x.shape, dtype=np.float64)
    for e in ellipses:
        phi = np.deg2rad(e.phi_deg)
        c, s = np.cos(phi), np.sin(phi)
        dx = x - e.x0
        dy = y - e.y0
        u = (dx * c + dy * s) / e.a
        v = (-dx * s + dy * c) / e.b
        fine[u * u + v * v <= 1.0] += e.value
    fine[x * x + y * y > 1.0] = 0.0
    np.clip(fine, 0.0, 1.0, out=fine)
    coarse = fine.reshape(size, oversample, size, oversample).mean(axis=(1, 3))
    coarse[~inscribed_mask(size)] = 0.0
    return coarse


def random_ellipses(count: int, rng: Rng) -> list[Ellipse]:
    ellipses = []
    for _ in range(count):
        radius = 0.7 * np.sqrt(rng.random())
        theta = rng.uniform(0.0, 2.0 * np.pi)
        ellipses.append(
            Ellipse(
                x0=float(radius * np.cos(theta)),
                y0=float(radius * np.sin(theta)),
                a=rng.uniform(0.05, 0.4),
                b=rng.uniform(0.05, 0.4),
                phi_deg=rng.uniform(0.0, 180.0),
                value=rng.uniform(0.1, 1.0),
            )
        )
    return ellipses


def make_phantom(spec: PhantomSpec) -> Image:
    if spec.size % 16 != 0:
        raise InvalidSpecError(f"phantom size {spec.size} is not divisible by 16")
    if spec.kind == "shepp-logan":
        ellipses: list[Ellipse] = list(SHEPP_LOGAN)
    else:
        ellipses = random_ellipses(spec.ellipse_count, Rng(spec.seed))
    pixels = render_ellipses(ellipses, spec.size)
    logger.debug("phantom kind=%s size=%d seed=%d", spec.kind, spec.size, spec.seed)
    return Image(pixels=pixels)


def inscribed_mask(size: int) -> np.ndarray:
    """Pixels whose centers lie inside the circle inscribed in the size x size square."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    return coords[np.newaxis, :] ** 2 + coords[:, np.newaxis] ** 2 <= (size / 2.0) ** 2


__all__ = ["Ellipse", "SHEPP_LOGAN", "render_ellipses", "random_ellipses", "make_phantom", "inscribed_mask"]
