from __future__ import annotations

import logging
from functools import lru_cache
from typing import Literal

import numpy as np

from src.core.errors import GeometryError
from src.core.types import Image, Sinogram
from src.tomo.fft import fft, ifft, next_power_of_two
from src.tomo.geometry import Geometry
from src.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

Window = Literal["ram-lak", "hann"]


@lru_cache(maxsize=32)
def ramp_filter(detectors: int, window: Window = "ram-lak") -> np.ndarray:
    """Frequency response of the band-limited ramp on the zero-padded length.

    The padded length is the next power of two of twice the detector count, never
    below 64.

    The spatial Ram-Lak kernel (h[0] = 1/4, h[odd n] = -1/(pi n)^2) is transformed
    instead of sampling |f| directly, which removes the DC offset of a sampled ramp.
    """
    size = max(64, next_power_of_two(2 * detectors))
    n = np.concatenate((np.arange(1, size // 2 + 1, 2), np.arange(size // 2 - 1, 0, -2)))
    kernel = np.zeros(size)
    kernel[0] = 0.25
    kernel[1::2] = -1.0 / (np.pi * n) ** 2
    # unitary transform, so scale by sqrt(size) to get the convolution multiplier
    response = 2.0 * np.sqrt(size) * fft(kernel).real
    if window == "hann":
        # even in frequency, so the filtered kernel stays real and symmetric
        response *= 0.5 * (1.0 + np.cos(2.0 * np.pi * np.fft.fftfreq(size)))
    elif window != "ram-lak":
        raise GeometryError(f"unknown FBP window {window!r}")
    response.setflags(write=False)
    return response


def filter_views(samples: np.ndarray, window: Window = "ram-lak") -> np.ndarray:
    """Ramp-filter each row of a views x detectors array. Self-adjoint."""
    views, detectors = samples.shape
    response = ramp_filter(detectors, window)
    padded = np.zeros((views, response.size))
    padded[:, :detectors] = samples
    return ifft(fft(padded, axis=1) * response, axis=1).real[:, :detectors]


def angular_weights(angles_deg: np.ndarray) -> np.ndarray:
    """Half the angular gap (radians) to the neighbouring views, periodic over pi."""
    theta = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    prev = np.roll(theta, 1)
    nxt = np.roll(theta, -1)
    prev[0] -= np.pi
    nxt[-1] += np.pi
    return (nxt - prev) / 2.0


@lru_cache(maxsize=512)
def _pixel_lookup(size: int, angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    theta = np.deg2rad(angle_deg)
    c = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - c
    x = coords[None, :]
    y = -coords[:, None]
    pos = (x * np.cos(theta) + y * np.sin(theta) + c).reshape(-1)
    lo = np.floor(pos).astype(np.int64)
    return lo, pos - lo


def _interp_row(row: np.ndarray, lo: np.ndarray, frac: np.ndarray) -> np.ndarray:
    n = row.size
    out = np.zeros(lo.size)
    ok0 = (lo >= 0) & (lo < n)
    out[ok0] += (1.0 - frac[ok0]) * row[lo[ok0]]
    ok1 = (lo + 1 >= 0) & (lo + 1 < n)
    out[ok1] += frac[ok1] * row[lo[ok1] + 1]
    return out


def _splat_row(values: np.ndarray, lo: np.ndarray, frac: np.ndarray, n: int) -> np.ndarray:
    ok0 = (lo >= 0) & (lo < n)
    ok1 = (lo + 1 >= 0) & (lo + 1 < n)
    return np.bincount(lo[ok0], weights=(1.0 - frac[ok0]) * values[ok0], minlength=n) + np.bincount(
        lo[ok1] + 1, weights=frac[ok1] * values[ok1], minlength=n
    )


class FbpOperator:
    """Filtered backprojection as a linear map R^{V x N} -> R^{N x N} with its adjoint."""

    def __init__(self, geometry: Geometry, window: Window = "ram-lak") -> None:
        self.geometry = geometry
        self.window = window
        self.scale = angular_weights(geometry.angle_array()) / 2.0
        self.mask = geometry.mask()
        self._lookups = [_pixel_lookup(geometry.size, a) for a in geometry.angles]

    def _check_sino(self, samples: np.ndarray) -> None:
        expected = (self.geometry.views, self.geometry.detectors)
        if samples.shape != expected:
            raise GeometryError(f"expected sinogram shape {expected}, got {samples.shape}")

    def forward(self, samples: np.ndarray) -> np.ndarray:
        self._check_sino(samples)
        n = self.geometry.size
        filtered = filter_views(np.asarray(samples, dtype=np.float64), self.window)

        def backproject(v: int) -> np.ndarray:
            lo, frac = self._lookups[v]
            return self.scale[v] * _interp_row(filtered[v], lo, frac)

        out = np.zeros(n * n)
        for buf in ordered_map(backproject, range(self.geometry.views)):
            out += buf
        out = out.reshape(n, n)
        out[~self.mask] = 0.0
        return out

    def adjoint(self, image: np.ndarray) -> np.ndarray:
        n = self.geometry.size
        if image.shape != (n, n):
            raise GeometryError(f"expected a {n}x{n} image, got {image.shape}")
        flat = np.where(self.mask, image, 0.0).reshape(-1)

        def splat(v: int) -> np.ndarray:
            lo, frac = self._lookups[v]
            return self.scale[v] * _splat_row(flat, lo, frac, n)

        rows = np.stack(ordered_map(splat, range(self.geometry.views)))
        return filter_views(rows, self.window)


def fbp(sino: Sinogram, size: int, window: Window = "ram-lak") -> Image:
    if sino.views == 0:
        raise GeometryError("empty angle list")
    if sino.detectors != size:
        raise GeometryError(f"{sino.detectors} detectors for image size {size}")
    op = FbpOperator(Geometry.create(size, sino.angles), window)
    logger.debug("fbp size=%d views=%d window=%s", size, sino.views, window)
    return Image(pixels=op.forward(sino.samples))


def fbp_adjoint(image: Image, angles: np.ndarray, window: Window = "ram-lak") -> Sinogram:
    op = FbpOperator(Geometry.create(image.height, angles), window)
    return Sinogram(angles=op.geometry.angle_array(), samples=op.adjoint(image.pixels))


__all__ = ["FbpOperator", "fbp", "fbp_adjoint", "filter_views", "ramp_filter", "angular_weights", "Window"]
