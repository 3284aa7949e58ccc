"""Joseph ray-driven projector and its exact adjoint.

Each view is stored as a sparse triplet list (ray, pixel, weight). Forward
projection gathers along those triplets, backprojection scatters along the same
triplets, so the pair is matched to rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from src.core.errors import GeometryError
from src.core.phantom import inscribed_mask
from src.core.types import Image, Sinogram
from src.tomo.geometry import Geometry
from src.utils.parallel import ordered_map


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewWeights:
    rays: np.ndarray
    pixels: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=512)
def view_weights(size: int, angle_deg: float) -> ViewWeights:
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    c = (size - 1) / 2.0
    offsets = np.arange(size, dtype=np.float64) - c

    if abs(cos_t) >= abs(sin_t):
        # near-vertical rays: one sample per image row, interpolate across columns
        rows = np.arange(size)
        y = c - rows.astype(np.float64)
        frac_idx = (offsets[:, None] - y[None, :] * sin_t) / cos_t + c
        step = 1.0 / abs(cos_t)
        fixed = np.broadcast_to(rows[None, :], frac_idx.shape)
        along_rows = True
    else:
        # near-horizontal rays: one sample per image column, interpolate across rows
        cols = np.arange(size)
        x = cols.astype(np.float64) - c
        y_at = (offsets[:, None] - x[None, :] * cos_t) / sin_t
        frac_idx = c - y_at
        step = 1.0 / abs(sin_t)
        fixed = np.broadcast_to(cols[None, :], frac_idx.shape)
        along_rows = False

    ray = np.broadcast_to(np.arange(size)[:, None], frac_idx.shape)
    lo = np.floor(frac_idx).astype(np.int64)
    frac = frac_idx - lo
    mask = inscribed_mask(size).reshape(-1)

    rays, pixels, weights = [], [], []
    for idx, w in ((lo, 1.0 - frac), (lo + 1, frac)):
        ok = (idx >= 0) & (idx < size) & (w > 0.0)
        if along_rows:
            pix = fixed[ok] * size + idx[ok]
        else:
            pix = idx[ok] * size + fixed[ok]
        keep = mask[pix]
        rays.append(ray[ok][keep])
        pixels.append(pix[keep])
        weights.append(step * w[ok][keep])

    return ViewWeights(
        rays=np.concatenate(rays).astype(np.int64),
        pixels=np.concatenate(pixels).astype(np.int64),
        weights=np.concatenate(weights),
    )


class JosephProjector:
    """Matched forward / backprojection pair A, A^T for one geometry."""

    def __init__(self, geometry: Geometry) -> None:
        self.geometry = geometry
        self._views = [view_weights(geometry.size, a) for a in geometry.angles]

    def forward(self, pixels: np.ndarray) -> np.ndarray:
        n = self.geometry.size
        if pixels.shape != (n, n):
            raise GeometryError(f"expected a {n}x{n} image, got {pixels.shape}")
        flat = np.asarray(pixels, dtype=np.float64).reshape(-1)

        def project(vw: ViewWeights) -> np.ndarray:
            return np.bincount(vw.rays, weights=vw.weights * flat[vw.pixels], minlength=n)

        return np.stack(ordered_map(project, self._views))

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        n = self.geometry.size
        if samples.shape != (self.geometry.views, n):
            raise GeometryError(f"expected a {self.geometry.views}x{n} sinogram, got {samples.shape}")
        data = np.asarray(samples, dtype=np.float64)

        def backproject(pair: tuple[ViewWeights, np.ndarray]) -> np.ndarray:
            vw, row = pair
            return np.bincount(vw.pixels, weights=vw.weights * row[vw.rays], minlength=n * n)

        out = np.zeros(n * n, dtype=np.float64)
        # fixed summation order keeps the result independent of the worker count
        for buf in ordered_map(backproject, list(zip(self._views, data))):
            out += buf
        return out.reshape(n, n)


def radon_forward(img: Image, angles: np.ndarray | list[float]) -> Sinogram:
    if not img.is_square:
        raise GeometryError(f"projector needs a square image, got {img.height}x{img.width}")
    geometry = Geometry.create(img.height, angles)
    samples = JosephProjector(geometry).forward(img.pixels)
    logger.debug("projected %dx%d image over %d views", img.height, img.width, geometry.views)
    return Sinogram(angles=geometry.angle_array(), samples=samples)


def backproject_adjoint(sino: Sinogram, size: int) -> Image:
    """A^T applied to a sinogram (unfiltered, unnormalized)."""
    if sino.detectors != size:
        raise GeometryError(f"{sino.detectors} detectors for image size {size}")
    geometry = Geometry.create(size, sino.angles)
    return Image(pixels=JosephProjector(geometry).adjoint(sino.samples))


__all__ = ["JosephProjector", "ViewWeights", "view_weights", "radon_forward", "backproject_adjoint"]
