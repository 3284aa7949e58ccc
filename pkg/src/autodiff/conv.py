from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.errors import ShapeError
from src.autodiff.tensor import Tensor


def _out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    *,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Grouped 2-D cross-correlation. x: (N, Cin, H, W), w: (Cout, Cin/groups, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeError(f"channels {cin}->{cout} are not divisible by groups={groups}")
    if cin_g != cin // groups:
        raise ShapeError(f"weight expects {cin_g * groups} input channels, got {cin}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"bias shape {b.shape} does not match {cout} output channels")
    ho, wo = _out_size(h, kh, stride, padding), _out_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{wd} with padding {padding}")
    cout_g = cout // groups

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    win_g = win.reshape(n, groups, cin_g, ho, wo, kh, kw)
    w_g = w.data.reshape(groups, cout_g, cin_g, kh, kw)
    out = np.einsum("ngchwij,gocij->ngohw", win_g, w_g, optimize=True).reshape(n, cout, ho, wo)
    if b is not None:
        out = out + b.data[None, :, None, None]
    out = out.astype(x.dtype, copy=False)

    def backward(g: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        g_g = g.reshape(n, groups, cout_g, ho, wo)
        gw = np.einsum("ngohw,ngchwij->gocij", g_g, win_g, optimize=True).reshape(w.shape) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            gwin = np.einsum("ngohw,gocij->ngchwij", g_g, w_g, optimize=True).reshape(n, cin, ho, wo, kh, kw)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += gwin[..., i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out, parents, "conv2d", backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, *, stride: int = 2) -> Tensor:
    """Transposed convolution, the adjoint of a stride-``stride`` conv2d. w: (Cin, Cout, k, k)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects 4-D input and weight, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    w_cin, cout, kh, kw = w.shape
    if w_cin != cin:
        raise ShapeError(f"weight expects {w_cin} input channels, got {cin}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"bias shape {b.shape} does not match {cout} output channels")
    ho, wo = (h - 1) * stride + kh, (wd - 1) * stride + kw
    out = np.zeros((n, cout, ho, wo), dtype=np.result_type(x.dtype, w.dtype))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (wd - 1) + 1:stride] += np.einsum(
                "nchw,co->nohw", x.data, w.data[:, :, i, j], optimize=True
            )
    if b is not None:
        out += b.data[None, :, None, None]
    out = out.astype(x.dtype, copy=False)

    def backward(g: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        gx = np.zeros(x.shape, dtype=g.dtype) if x.requires_grad else None
        gw = np.zeros(w.shape, dtype=g.dtype) if w.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                patch = g[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (wd - 1) + 1:stride]
                if gx is not None:
                    gx += np.einsum("nohw,co->nchw", patch, w.data[:, :, i, j], optimize=True)
                if gw is not None:
                    gw[:, :, i, j] = np.einsum("nchw,nohw->co", x.data, patch, optimize=True)
        gb = g.sum(axis=(0, 2, 3)) if b is not None and b.requires_grad else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out, parents, "conv_transpose2d", backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling at stride 2; gradient goes to the first maximum in row-major order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial dims, got {h}x{w}")
    windows = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        routed = np.zeros(windows.shape, dtype=g.dtype)
        np.put_along_axis(routed, arg[..., None], g[..., None], axis=-1)
        return (routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return Tensor.from_op(out, (x,), "maxpool2d", backward)


__all__ = ["conv2d", "conv_transpose2d", "maxpool2d"]
