from __future__ import annotations

import numpy as np

from src.core.errors import DegenerateBatchError, ShapeError
from src.autodiff.tensor import Tensor


NORM_EPS = 1e-5
BN_MOMENTUM = 0.1


def _standardize_backward(g_hat: np.ndarray, x_hat: np.ndarray, inv_std: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    # d/dx of (x - mean) / std for statistics taken over ``axes``
    return inv_std * (
        g_hat - g_hat.mean(axis=axes, keepdims=True) - x_hat * (g_hat * x_hat).mean(axis=axes, keepdims=True)
    )


def _affine_check(op: str, x: Tensor, gamma: Tensor, beta: Tensor) -> int:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects (N, C, H, W), got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"{op} affine parameters {gamma.shape}/{beta.shape} do not match {c} channels")
    return c


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    c = _affine_check("group_norm", x, gamma, beta)
    if groups < 1 or c % groups:
        raise ShapeError(f"{c} channels are not divisible into {groups} norm groups")
    n, _, h, w = x.shape
    xg = x.data.reshape(n, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = ((xg - mu) ** 2).mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = ((xg - mu) * inv_std).reshape(x.shape)
    out = x_hat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_hat = (g * gamma.data[None, :, None, None]).reshape(n, groups, -1)
        gx = _standardize_backward(g_hat, x_hat.reshape(n, groups, -1), inv_std, (2,)).reshape(x.shape)
        return gx, (g * x_hat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor.from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), "group_norm", backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = NORM_EPS,
) -> Tensor:
    """Batch normalization. In training mode the running buffers are updated in place."""
    c = _affine_check("batch_norm", x, gamma, beta)
    if running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeError(f"running statistics do not match {c} channels")
    scale = gamma.data[None, :, None, None]
    shift = beta.data[None, :, None, None]
    axes = (0, 2, 3)

    if not training:
        inv_std = 1.0 / np.sqrt(running_var + eps)[None, :, None, None]
        x_hat = (x.data - running_mean[None, :, None, None]) * inv_std
        out = x_hat * scale + shift

        def eval_backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            return g * scale * inv_std, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

        return Tensor.from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), "batch_norm", eval_backward)

    if x.shape[0] < 2:
        raise DegenerateBatchError("batch_norm in training mode needs a batch of at least 2")
    count = x.shape[0] * x.shape[2] * x.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    out = x_hat * scale + shift

    running_mean *= 1.0 - momentum
    running_mean += momentum * mu.reshape(c)
    running_var *= 1.0 - momentum
    running_var += momentum * var.reshape(c) * count / (count - 1)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gx = _standardize_backward(g * scale, x_hat, inv_std, axes)
        return gx, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    return Tensor.from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), "batch_norm", backward)


__all__ = ["group_norm", "batch_norm", "NORM_EPS", "BN_MOMENTUM"]
