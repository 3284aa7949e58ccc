from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import ShapeError
from src.autodiff import ops
from src.autodiff.conv import conv2d
from src.autodiff.tensor import Tensor


TV_SMOOTHING = 1e-8
LOG_EPS = 1e-12


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mse: float = Field(default=1.0, ge=0.0)
    ssim: float = Field(default=1.0, ge=0.0)
    adversarial: float = Field(default=1e-3, ge=0.0)
    tv: float = Field(default=1e-1, ge=0.0)


class SsimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    window: int = Field(default=11, ge=1)
    sigma: float = Field(default=1.5, gt=0.0)
    k1: float = Field(default=0.01, gt=0.0)
    k2: float = Field(default=0.03, gt=0.0)
    data_range: float = Field(default=1.0, gt=0.0)


@lru_cache(maxsize=16)
def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Separable Gaussian window normalized to sum 1."""
    k = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(k * k) / (2.0 * sigma * sigma))
    g /= g.sum()
    window = np.outer(g, g)
    window.setflags(write=False)
    return window


def _depthwise_constant(kernel: np.ndarray, channels: int, dtype: np.dtype) -> Tensor:
    weight = np.broadcast_to(kernel, (channels, 1, *kernel.shape)).astype(dtype)
    return Tensor(weight)


def _check_pair(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ShapeError(f"{op}: expected (N, C, H, W), got {a.shape}")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_pair("mse_loss", pred, target)
    return ops.mean(ops.square(ops.sub(pred, target)))


def ssim(x: Tensor, y: Tensor, cfg: SsimConfig = SsimConfig()) -> Tensor:
    """Mean SSIM over the valid (unpadded) window positions."""
    _check_pair("ssim", x, y)
    if x.shape[2] < cfg.window or x.shape[3] < cfg.window:
        raise ShapeError(f"ssim: image {x.shape[2]}x{x.shape[3]} is smaller than the {cfg.window}x{cfg.window} window")
    channels = x.shape[1]
    w = _depthwise_constant(gaussian_window(cfg.window, cfg.sigma), channels, x.dtype)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2

    def blur(t: Tensor) -> Tensor:
        return conv2d(t, w, groups=channels)

    mu_x, mu_y = blur(x), blur(y)
    mu_xx, mu_yy, mu_xy = ops.square(mu_x), ops.square(mu_y), ops.mul(mu_x, mu_y)
    var_x = ops.sub(blur(ops.square(x)), mu_xx)
    var_y = ops.sub(blur(ops.square(y)), mu_yy)
    cov = ops.sub(blur(ops.mul(x, y)), mu_xy)

    numerator = ops.mul(ops.add_scalar(ops.scalar_mul(mu_xy, 2.0), c1), ops.add_scalar(ops.scalar_mul(cov, 2.0), c2))
    denominator = ops.mul(ops.add_scalar(ops.add(mu_xx, mu_yy), c1), ops.add_scalar(ops.add(var_x, var_y), c2))
    return ops.mean(ops.div(numerator, denominator))


def ssim_loss(pred: Tensor, target: Tensor, cfg: SsimConfig = SsimConfig()) -> Tensor:
    return ops.add_scalar(ops.neg(ssim(pred, target, cfg)), 1.0)


def tv_loss(x: Tensor) -> Tensor:
    """Smoothed anisotropic TV averaged over N*C*H*W; the sqrt(eps) floor is subtracted so flat images give 0."""
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"tv_loss needs (N, C, H>=2, W>=2), got {x.shape}")
    n, c, h, w = x.shape
    dx = conv2d(x, _depthwise_constant(np.array([[-1.0, 1.0]]), c, x.dtype), groups=c)
    dy = conv2d(x, _depthwise_constant(np.array([[-1.0], [1.0]]), c, x.dtype), groups=c)
    floor = float(np.sqrt(TV_SMOOTHING))

    def smooth_abs_sum(d: Tensor) -> Tensor:
        return ops.add_scalar(ops.sum_(ops.sqrt(ops.add_scalar(ops.square(d), TV_SMOOTHING))), -floor * d.numel)

    total = ops.add(smooth_abs_sum(dx), smooth_abs_sum(dy))
    return ops.scalar_mul(total, 1.0 / (n * c * h * w))


def adv_loss_g(d_fake: Tensor) -> Tensor:
    """Mean of 1 - D(fake)."""
    return ops.mean(ops.add_scalar(ops.neg(d_fake), 1.0))


def disc_loss(d_real: Tensor, d_fake: Tensor, *, log_form: bool = False) -> Tensor:
    """Mean of 1 - D(real) + D(fake); ``log_form`` switches to the cross-entropy GAN loss."""
    if d_real.shape != d_fake.shape:
        raise ShapeError(f"disc_loss: {d_real.shape} vs {d_fake.shape}")
    if log_form:
        real_term = ops.neg(ops.log(ops.add_scalar(d_real, LOG_EPS)))
        fake_term = ops.neg(ops.log(ops.add_scalar(ops.neg(d_fake), 1.0 + LOG_EPS)))
        return ops.mean(ops.add(real_term, fake_term))
    return ops.mean(ops.add(ops.add_scalar(ops.neg(d_real), 1.0), d_fake))


def gen_loss(
    pred: Tensor,
    target: Tensor,
    d_fake: Optional[Tensor],
    weights: LossWeights = LossWeights(),
    cfg: SsimConfig = SsimConfig(),
) -> Tensor:
    """Weighted MSE + SSIM + adversarial + TV generator loss; zero-weight terms are left out of the graph."""
    terms: list[Tensor] = []
    if weights.mse:
        terms.append(ops.scalar_mul(mse_loss(pred, target), weights.mse))
    if weights.ssim:
        terms.append(ops.scalar_mul(ssim_loss(pred, target, cfg), weights.ssim))
    if weights.adversarial and d_fake is not None:
        terms.append(ops.scalar_mul(adv_loss_g(d_fake), weights.adversarial))
    if weights.tv:
        terms.append(ops.scalar_mul(tv_loss(pred), weights.tv))
    if not terms:
        return ops.scalar_mul(mse_loss(pred, target), 0.0)
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return total


def total_loss(radon_loss: Tensor, image_loss: Tensor) -> Tensor:
    return ops.add(radon_loss, image_loss)


__all__ = [
    "LossWeights",
    "SsimConfig",
    "gaussian_window",
    "mse_loss",
    "ssim",
    "ssim_loss",
    "tv_loss",
    "adv_loss_g",
    "disc_loss",
    "gen_loss",
    "total_loss",
]
