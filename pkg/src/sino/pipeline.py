"""Sinogram degradation and pre-restoration: view subsampling, photon noise, view interpolation, padding."""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import InterpolationError, SamplingError, SizeError
from src.core.rng import Rng
from src.core.types import Sinogram


logger = logging.getLogger(__name__)

# below this mean count Poisson draws use exact inversion
EXACT_POISSON_LIMIT = 50.0
_MAX_INVERSION_STEPS = 1000


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    incident_photons: float = Field(default=2e7, gt=0.0)
    mu_scale: float = Field(default=1.0, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)


def sparse_sample(full: Sinogram, target_views: int) -> Sinogram:
    if target_views < 1 or full.views % target_views != 0:
        raise SamplingError(f"{target_views} views does not evenly divide {full.views}")
    stride = full.views // target_views
    return Sinogram(angles=full.angles[::stride].copy(), samples=full.samples[::stride].copy())


def _poisson_inversion(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = np.zeros(lam.shape, dtype=np.float64)
    pmf = np.exp(-lam)
    cdf = pmf.copy()
    active = u > cdf
    for step in range(1, _MAX_INVERSION_STEPS + 1):
        if not active.any():
            break
        k[active] += 1.0
        pmf = np.where(active, pmf * lam / step, pmf)
        cdf = np.where(active, cdf + pmf, cdf)
        active &= u > cdf
    return k


def poisson_noise(sino: Sinogram, spec: NoiseSpec) -> Sinogram:
    """Transmitted-count Poisson noise, mapped back to line integrals."""
    p = np.maximum(np.asarray(sino.samples, dtype=np.float64), 0.0)
    i0 = spec.incident_photons
    lam = i0 * np.exp(-p * spec.mu_scale)

    gen = Rng(spec.seed).numpy_generator()
    u = gen.random(lam.shape)
    z = gen.standard_normal(lam.shape)

    counts = np.maximum(np.rint(lam + np.sqrt(lam) * z), 0.0)
    small = lam <= EXACT_POISSON_LIMIT
    if small.any():
        counts[small] = _poisson_inversion(lam[small], u[small])
    counts = np.maximum(counts, 1.0)

    noisy = -np.log(counts / i0) / spec.mu_scale
    return Sinogram(angles=sino.angles.copy(), samples=noisy)


def interpolate_views(sparse: Sinogram, target_angles: np.ndarray | list[float]) -> Sinogram:
    """Linear interpolation along the angle axis, wrapping through 180 degrees with a detector flip."""
    if sparse.views < 2:
        raise InterpolationError(f"need at least 2 source views, got {sparse.views}")
    targets = np.asarray(target_angles, dtype=np.float64).reshape(-1)
    if targets.size == 0 or np.any(targets < 0.0) or np.any(targets >= 180.0):
        raise InterpolationError("target angles must be a non-empty list inside [0, 180)")
    src_angles = sparse.angles
    if np.any(src_angles >= 180.0):
        raise InterpolationError("source angles must lie in [0, 180)")

    rows = np.asarray(sparse.samples, dtype=np.float64)
    first, last = src_angles[0], src_angles[-1]
    out = np.empty((targets.size, sparse.detectors))
    for t_idx, t in enumerate(targets):
        hit = np.flatnonzero(src_angles == t)
        if hit.size:
            out[t_idx] = rows[hit[0]]
            continue
        if t > last:
            left, right = rows[-1], rows[0][::-1]
            w = (t - last) / (first + 180.0 - last)
        elif t < first:
            left, right = rows[-1][::-1], rows[0]
            w = (t - (last - 180.0)) / (first - (last - 180.0))
        else:
            i = int(np.searchsorted(src_angles, t)) - 1
            left, right = rows[i], rows[i + 1]
            w = (t - src_angles[i]) / (src_angles[i + 1] - src_angles[i])
        out[t_idx] = (1.0 - w) * left + w * right
    return Sinogram(angles=targets, samples=out)


def pad_views(sino: Sinogram, padded_views: int) -> Sinogram:
    """Append 180-degree continuations (detector-flipped copies) of the leading views."""
    if padded_views < sino.views:
        raise SizeError(f"cannot pad {sino.views} views down to {padded_views}")
    if padded_views % 16 != 0:
        raise SizeError(f"padded view count {padded_views} is not divisible by 16")
    extra = padded_views - sino.views
    if extra > sino.views:
        raise SizeError(f"padding {sino.views} views to {padded_views} needs more than one half-turn")
    if extra == 0:
        return Sinogram(angles=sino.angles.copy(), samples=sino.samples.copy())
    appended = sino.samples[:extra, ::-1]
    return Sinogram(
        angles=np.concatenate([sino.angles, sino.angles[:extra] + 180.0]),
        samples=np.concatenate([sino.samples, appended], axis=0),
    )


def crop_views(sino: Sinogram, views: int) -> Sinogram:
    if views < 1 or views > sino.views:
        raise SizeError(f"cannot crop {sino.views} views to {views}")
    return Sinogram(angles=sino.angles[:views].copy(), samples=sino.samples[:views].copy())


def pad_array(samples: np.ndarray, padded_views: int) -> np.ndarray:
    """pad_views on a bare (views, detectors) array."""
    views = samples.shape[0]
    extra = padded_views - views
    if extra < 0 or extra > views or padded_views % 16 != 0:
        raise SizeError(f"cannot pad {views} views to {padded_views}")
    return np.concatenate([samples, samples[:extra, ::-1]], axis=0)


__all__ = [
    "NoiseSpec",
    "sparse_sample",
    "poisson_noise",
    "interpolate_views",
    "pad_views",
    "crop_views",
    "pad_array",
    "EXACT_POISSON_LIMIT",
]
