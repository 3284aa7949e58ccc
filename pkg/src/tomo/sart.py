from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from src.core.errors import GeometryError, NumericalFailureError
from src.core.types import Image, Sinogram
from src.tomo.geometry import Geometry, SartConfig
from src.tomo.projector import JosephProjector


logger = logging.getLogger(__name__)

TV_STEP = 1e-4
TV_SMOOTHING = 1e-8

Operator = Callable[[np.ndarray], np.ndarray]


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def sart_sweep(
    x: np.ndarray,
    b: np.ndarray,
    forward: Operator,
    adjoint: Operator,
    row_sums: np.ndarray,
    col_sums: np.ndarray,
    relaxation: float,
) -> np.ndarray:
    """One simultaneous update x + relaxation * A^T((b - Ax) / rows) / cols. Empty rows and columns are skipped."""
    residual = _safe_divide(b - forward(x), row_sums)
    return x + relaxation * _safe_divide(adjoint(residual), col_sums)


def tv_gradient(x: np.ndarray) -> np.ndarray:
    """Gradient of the smoothed anisotropic total variation sum sqrt(d^2 + 1e-8)."""
    grad = np.zeros_like(x)
    dx = x[:, 1:] - x[:, :-1]
    dy = x[1:, :] - x[:-1, :]
    px = dx / np.sqrt(dx * dx + TV_SMOOTHING)
    py = dy / np.sqrt(dy * dy + TV_SMOOTHING)
    grad[:, 1:] += px
    grad[:, :-1] -= px
    grad[1:, :] += py
    grad[:-1, :] -= py
    return grad


def tv_denoise(x: np.ndarray, weight: float, max_iter: int, eps: float, step: float = TV_STEP) -> np.ndarray:
    """Gradient descent on weight * TV(x); stops once the relative change drops below eps."""
    if weight <= 0.0:
        return x
    current = x.copy()
    for _ in range(max_iter):
        update = step * weight * tv_gradient(current)
        current -= update
        norm = np.linalg.norm(current)
        if norm == 0.0 or np.linalg.norm(update) / norm < eps:
            break
    return current


def sart_tv(
    sino: Sinogram,
    size: int,
    cfg: SartConfig,
    seed_image: Optional[Image] = None,
    *,
    on_iteration: Optional[Callable[[int, np.ndarray], None]] = None,
) -> Image:
    if sino.detectors != size:
        raise GeometryError(f"{sino.detectors} detectors for image size {size}")
    geometry = Geometry.create(size, sino.angles)
    projector = JosephProjector(geometry)
    mask = geometry.mask()

    row_sums = projector.forward(np.ones((size, size)))
    col_sums = projector.adjoint(np.ones((geometry.views, size)))
    b = np.asarray(sino.samples, dtype=np.float64)

    if seed_image is None:
        x = np.zeros((size, size))
    else:
        if seed_image.pixels.shape != (size, size):
            raise GeometryError(f"seed image shape {seed_image.pixels.shape} does not match size {size}")
        x = np.where(mask, seed_image.pixels, 0.0).astype(np.float64)

    for it in range(cfg.iters):
        x = sart_sweep(x, b, projector.forward, projector.adjoint, row_sums, col_sums, cfg.relaxation)
        np.maximum(x, 0.0, out=x)
        x = tv_denoise(x, cfg.tv_w, cfg.tv_maxit, cfg.tv_eps)
        if not np.all(np.isfinite(x)):
            raise NumericalFailureError("SART-TV produced non-finite pixels", iteration=it)
        if on_iteration is not None:
            on_iteration(it, x)

    logger.debug("sart-tv size=%d views=%d iters=%d", size, geometry.views, cfg.iters)
    return Image(pixels=np.where(mask, x, 0.0))


__all__ = ["sart_sweep", "sart_tv", "tv_denoise", "tv_gradient", "TV_STEP"]
