"""U-shaped generator and the shared encoder used by the discriminator."""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from src.core.errors import ShapeError
from src.core.rng import Rng
from src.autodiff import ops
from src.autodiff.params import ModelParams, ParamScope
from src.autodiff.tensor import Tensor
from src.cagan import blocks
from src.cagan.config import NetConfig
from src.cagan.layers import LayerSpec, apply_conv, apply_conv_transpose, apply_norm, conv_spec, init_params, norm_spec


def check_input(x: Tensor, cfg: NetConfig) -> None:
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected (N, {cfg.in_channels}, H, W) input, got {x.shape}")
    m = cfg.size_multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise ShapeError(f"input {x.shape[2]}x{x.shape[3]} is not divisible by {m}")


# -- stem and encoder (shared with the discriminator) ----------------------------------

def plan_stem(cfg: NetConfig) -> List[LayerSpec]:
    c0 = cfg.stage_channels[0]
    return [
        conv_spec("stem.conv", cfg.in_channels, c0, kernel=3),
        norm_spec("stem.norm", c0, cfg.block),
    ]


def stem(x: Tensor, scope: ParamScope, cfg: NetConfig) -> Tensor:
    return ops.relu(apply_norm(apply_conv(x, scope, "stem.conv", padding=1), scope, "stem.norm", cfg.block))


def _stage_widths(cfg: NetConfig) -> list[tuple[int, int]]:
    widths = [*cfg.stage_channels, cfg.bottleneck_channels]
    return [(widths[k], widths[k + 1]) for k in range(cfg.depth)]


def plan_encoder(cfg: NetConfig) -> List[LayerSpec]:
    b = cfg.block
    plan: List[LayerSpec] = []
    for k, (c, c_next) in enumerate(_stage_widths(cfg), start=1):
        scale = 2 ** (k - 1)
        prefix = f"enc{k}"
        for i in range(2):
            if b.conv_kind == "vanilla":
                plan += blocks.plan_vanilla(f"{prefix}.s1_{i}", c, c, b, scale)
            else:
                plan += blocks.plan_shuffle_s1(f"{prefix}.s1_{i}", c, b, scale)
        if b.placement == "outside" or b.conv_kind == "vanilla":
            plan += blocks.plan_attention(f"{prefix}.att", c, b, scale)
        if b.downsample == "maxpool":
            plan += blocks.plan_maxpool_down(f"{prefix}.down", c, c_next, b, scale * 2)
        elif b.conv_kind == "vanilla":
            plan += blocks.plan_vanilla(f"{prefix}.down", c, c_next, b, scale * 2)
        else:
            plan += blocks.plan_two_branch(f"{prefix}.down", c, c_next, b, scale * 2, stride=2)
    return plan


def _stage_body(x: Tensor, scope: ParamScope, cfg: NetConfig, width: int) -> Tensor:
    b = cfg.block
    if b.conv_kind == "vanilla":
        return blocks.vanilla_block(x, scope, b, width)
    return blocks.shuffle_block_s1(x, scope, b)


def _stage_attention(x: Tensor, scope: ParamScope, cfg: NetConfig) -> Tensor:
    b = cfg.block
    if b.placement == "outside" or b.conv_kind == "vanilla":
        return blocks.attention(x, scope, b)
    return x


def encoder(x: Tensor, scope: ParamScope, cfg: NetConfig) -> tuple[Tensor, list[Tensor]]:
    """Run the four encoder stages; returns the downsampled output and the per-stage skips."""
    b = cfg.block
    skips: list[Tensor] = []
    for k, (c, c_next) in enumerate(_stage_widths(cfg), start=1):
        stage = scope.child(f"enc{k}")
        for i in range(2):
            x = _stage_body(x, stage.child(f"s1_{i}"), cfg, c)
        x = _stage_attention(x, stage.child("att"), cfg)
        skips.append(x)
        down = stage.child("down")
        if b.downsample == "maxpool":
            x = blocks.maxpool_down(x, down, b, c_next)
        elif b.conv_kind == "vanilla":
            x = blocks.vanilla_block(x, down, b, c_next, stride=2)
        else:
            x = blocks.shuffle_block_s2(x, down, b, c_next)
    return x, skips


# -- generator --------------------------------------------------------------------------

def plan_generator(cfg: NetConfig) -> List[LayerSpec]:
    b = cfg.block
    plan = plan_stem(cfg) + plan_encoder(cfg)
    mid_scale = cfg.size_multiple
    for i in range(2):
        if b.conv_kind == "vanilla":
            plan += blocks.plan_vanilla(f"mid.s1_{i}", cfg.bottleneck_channels, cfg.bottleneck_channels, b, mid_scale)
        else:
            plan += blocks.plan_shuffle_s1(f"mid.s1_{i}", cfg.bottleneck_channels, b, mid_scale)
    for k in range(cfg.depth, 0, -1):
        c, c_next = _stage_widths(cfg)[k - 1]
        scale = 2 ** (k - 1)
        prefix = f"dec{k}"
        plan.append(LayerSpec(f"{prefix}.up", "conv_transpose", c_next, c, kernel=2, stride=2, bias=True, scale=scale * 2))
        if b.conv_kind == "vanilla":
            plan += blocks.plan_vanilla(f"{prefix}.reduce", 2 * c, c, b, scale)
            plan += blocks.plan_vanilla(f"{prefix}.s1", c, c, b, scale)
        else:
            plan += blocks.plan_two_branch(f"{prefix}.reduce", 2 * c, c, b, scale, stride=1)
            plan += blocks.plan_shuffle_s1(f"{prefix}.s1", c, b, scale)
        if b.placement == "outside" or b.conv_kind == "vanilla":
            plan += blocks.plan_attention(f"{prefix}.att", c, b, scale)
    plan.append(conv_spec("head", cfg.stage_channels[0], cfg.out_channels, bias=True))
    return plan


def init_generator(cfg: NetConfig, rng: Rng, dtype: Optional[np.dtype] = None, name: str = "gen") -> ModelParams:
    return init_params(name, plan_generator(cfg), rng, dtype)


def generator_forward(x: Tensor, params: ModelParams, cfg: NetConfig) -> Tensor:
    """(N, 1, H, W) -> (N, 1, H, W); linear output."""
    check_input(x, cfg)
    b = cfg.block
    scope = params.scope()
    y = stem(x, scope, cfg)
    y, skips = encoder(y, scope, cfg)
    for i in range(2):
        y = _stage_body(y, scope.child(f"mid.s1_{i}"), cfg, cfg.bottleneck_channels)
    for k in range(cfg.depth, 0, -1):
        c, _ = _stage_widths(cfg)[k - 1]
        stage = scope.child(f"dec{k}")
        y = apply_conv_transpose(y, stage, "up")
        y = ops.concat([y, skips[k - 1]], axis=1)
        if b.conv_kind == "vanilla":
            y = blocks.vanilla_block(y, stage.child("reduce"), b, c)
        else:
            y = blocks.reduce_block(y, stage.child("reduce"), b, c)
        y = _stage_body(y, stage.child("s1"), cfg, c)
        y = _stage_attention(y, stage.child("att"), cfg)
    return apply_conv(y, scope, "head", bias=True)


__all__ = [
    "plan_stem",
    "plan_encoder",
    "plan_generator",
    "init_generator",
    "generator_forward",
    "encoder",
    "stem",
    "check_input",
]
