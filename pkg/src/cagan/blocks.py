"""Shuffle blocks, attention blocks and the ablation replacements.

Every block comes as a pair: ``plan_*`` lists its layers under a name prefix and
the forward function reads the same names from a ParamScope rooted at that prefix.
"""

from __future__ import annotations

from typing import List

from src.core.errors import ConfigError, ShapeError
from src.autodiff import ops
from src.autodiff.conv import maxpool2d
from src.autodiff.params import ParamScope
from src.autodiff.tensor import Tensor
from src.cagan.config import BlockConfig, mid_channels
from src.cagan.layers import LayerSpec, apply_conv, apply_norm, conv_spec, norm_spec


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


# -- coordinate attention ----------------------------------------------------------

def plan_ca_block(prefix: str, channels: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    m = mid_channels(channels, cfg.reduction)
    return [
        conv_spec(_join(prefix, "conv1"), channels, m, scale=scale, positions="coord"),
        norm_spec(_join(prefix, "norm1"), m, cfg, scale=scale),
        conv_spec(_join(prefix, "conv_h"), m, channels, bias=True, scale=scale, positions="h"),
        conv_spec(_join(prefix, "conv_w"), m, channels, bias=True, scale=scale, positions="w"),
    ]


def ca_block(x: Tensor, scope: ParamScope, cfg: BlockConfig) -> Tensor:
    n, c, h, w = x.shape
    if c < cfg.reduction:
        raise ConfigError(f"CA block on {c} channels with reduction {cfg.reduction}", key="net.block.reduction")
    z_h = ops.pool_axis(x, "W")
    z_w = ops.swap_hw(ops.pool_axis(x, "H"))
    y = ops.concat([z_h, z_w], axis=2)
    y = ops.relu(apply_norm(apply_conv(y, scope, "conv1"), scope, "norm1", cfg))
    y_h, y_w = ops.split(y, [h, w], axis=2)
    gate_h = ops.sigmoid(apply_conv(y_h, scope, "conv_h", bias=True))
    gate_w = ops.sigmoid(apply_conv(ops.swap_hw(y_w), scope, "conv_w", bias=True))
    return ops.coord_gate(x, gate_h, gate_w)


# -- squeeze and excitation ----------------------------------------------------------

def plan_se_block(prefix: str, channels: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    m = mid_channels(channels, cfg.reduction)
    return [
        conv_spec(_join(prefix, "fc1"), channels, m, bias=True, scale=scale, positions="global"),
        conv_spec(_join(prefix, "fc2"), m, channels, bias=True, scale=scale, positions="global"),
    ]


def se_block(x: Tensor, scope: ParamScope, cfg: BlockConfig) -> Tensor:
    if x.shape[1] < cfg.reduction:
        raise ConfigError(f"SE block on {x.shape[1]} channels with reduction {cfg.reduction}", key="net.block.reduction")
    s = ops.global_avg_pool(x)
    s = ops.relu(apply_conv(s, scope, "fc1", bias=True))
    s = ops.sigmoid(apply_conv(s, scope, "fc2", bias=True))
    return ops.channel_gate(x, s)


def plan_attention(prefix: str, channels: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    if cfg.attention == "CA":
        return plan_ca_block(prefix, channels, cfg, scale)
    if cfg.attention == "SE":
        return plan_se_block(prefix, channels, cfg, scale)
    return []


def attention(x: Tensor, scope: ParamScope, cfg: BlockConfig) -> Tensor:
    if cfg.attention == "CA":
        return ca_block(x, scope, cfg)
    if cfg.attention == "SE":
        return se_block(x, scope, cfg)
    return x


def _inside(cfg: BlockConfig) -> bool:
    return cfg.attention != "none" and cfg.placement == "inside"


# -- shuffle blocks --------------------------------------------------------------------

def plan_shuffle_s1(prefix: str, channels: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    h = channels // 2
    plan = [
        conv_spec(_join(prefix, "pw1"), h, h, scale=scale),
        norm_spec(_join(prefix, "n1"), h, cfg, scale=scale),
        conv_spec(_join(prefix, "dw"), h, h, kernel=3, groups=h, scale=scale),
        norm_spec(_join(prefix, "n2"), h, cfg, scale=scale),
        conv_spec(_join(prefix, "pw2"), h, h, scale=scale),
        norm_spec(_join(prefix, "n3"), h, cfg, scale=scale),
    ]
    if _inside(cfg):
        plan += plan_attention(_join(prefix, "att"), channels, cfg, scale)
    return plan


def shuffle_block_s1(x: Tensor, scope: ParamScope, cfg: BlockConfig) -> Tensor:
    c = x.shape[1]
    if c % 2:
        raise ShapeError(f"stride-1 shuffle block needs an even channel count, got {c}")
    keep, branch = ops.channel_split(x, (0.5, 0.5))
    h = c // 2
    branch = ops.relu(apply_norm(apply_conv(branch, scope, "pw1"), scope, "n1", cfg))
    branch = apply_norm(apply_conv(branch, scope, "dw", padding=1, groups=h), scope, "n2", cfg)
    branch = ops.relu(apply_norm(apply_conv(branch, scope, "pw2"), scope, "n3", cfg))
    y = ops.concat([keep, branch], axis=1)
    if _inside(cfg):
        y = attention(y, scope.child("att"), cfg)
    return ops.channel_shuffle(y, cfg.shuffle_groups)


def plan_two_branch(prefix: str, cin: int, cout: int, cfg: BlockConfig, scale: int, stride: int) -> List[LayerSpec]:
    """Layers of the non-split block; ``scale`` is that of its output."""
    o = cout // 2
    # branch B starts with a pointwise conv at the input resolution
    in_scale = max(1, scale // stride)
    plan = [
        conv_spec(_join(prefix, "a_dw"), cin, cin, kernel=3, groups=cin, scale=scale),
        norm_spec(_join(prefix, "a_n1"), cin, cfg, scale=scale),
        conv_spec(_join(prefix, "a_pw"), cin, o, scale=scale),
        norm_spec(_join(prefix, "a_n2"), o, cfg, scale=scale),
        conv_spec(_join(prefix, "b_pw1"), cin, o, scale=in_scale),
        norm_spec(_join(prefix, "b_n1"), o, cfg, scale=in_scale),
        conv_spec(_join(prefix, "b_dw"), o, o, kernel=3, groups=o, scale=scale),
        norm_spec(_join(prefix, "b_n2"), o, cfg, scale=scale),
        conv_spec(_join(prefix, "b_pw2"), o, o, scale=scale),
        norm_spec(_join(prefix, "b_n3"), o, cfg, scale=scale),
    ]
    return plan


def _two_branch(x: Tensor, scope: ParamScope, cfg: BlockConfig, cout: int, stride: int) -> Tensor:
    cin = x.shape[1]
    if cout % 2:
        raise ShapeError(f"two-branch shuffle block needs an even output width, got {cout}")
    if stride == 2 and (x.shape[2] % 2 or x.shape[3] % 2):
        raise ShapeError(f"downsampling needs even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    o = cout // 2
    a = apply_norm(apply_conv(x, scope, "a_dw", stride=stride, padding=1, groups=cin), scope, "a_n1", cfg)
    a = ops.relu(apply_norm(apply_conv(a, scope, "a_pw"), scope, "a_n2", cfg))
    b = ops.relu(apply_norm(apply_conv(x, scope, "b_pw1"), scope, "b_n1", cfg))
    b = apply_norm(apply_conv(b, scope, "b_dw", stride=stride, padding=1, groups=o), scope, "b_n2", cfg)
    b = ops.relu(apply_norm(apply_conv(b, scope, "b_pw2"), scope, "b_n3", cfg))
    return ops.channel_shuffle(ops.concat([a, b], axis=1), cfg.shuffle_groups)


def shuffle_block_s2(x: Tensor, scope: ParamScope, cfg: BlockConfig, cout: int) -> Tensor:
    return _two_branch(x, scope, cfg, cout, stride=2)


def reduce_block(x: Tensor, scope: ParamScope, cfg: BlockConfig, cout: int) -> Tensor:
    """Stride-1 non-split shuffle block used to change width after a skip concat."""
    return _two_branch(x, scope, cfg, cout, stride=1)


# -- ablation replacements -----------------------------------------------------------------

def plan_vanilla(prefix: str, cin: int, cout: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    return [
        conv_spec(_join(prefix, "conv"), cin, cout, kernel=3, scale=scale),
        norm_spec(_join(prefix, "norm"), cout, cfg, scale=scale),
    ]


def vanilla_block(x: Tensor, scope: ParamScope, cfg: BlockConfig, cout: int, stride: int = 1) -> Tensor:
    """3x3 conv, norm, ReLU; strided when it replaces a downsampling block."""
    if stride == 2 and (x.shape[2] % 2 or x.shape[3] % 2):
        raise ShapeError(f"downsampling needs even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    return ops.relu(apply_norm(apply_conv(x, scope, "conv", stride=stride, padding=1), scope, "norm", cfg))


def plan_maxpool_down(prefix: str, cin: int, cout: int, cfg: BlockConfig, scale: int) -> List[LayerSpec]:
    return [
        conv_spec(_join(prefix, "pw"), cin, cout, scale=scale),
        norm_spec(_join(prefix, "norm"), cout, cfg, scale=scale),
    ]


def maxpool_down(x: Tensor, scope: ParamScope, cfg: BlockConfig, cout: int) -> Tensor:
    """2x2 max-pool then a pointwise conv to the next stage width."""
    return ops.relu(apply_norm(apply_conv(maxpool2d(x), scope, "pw"), scope, "norm", cfg))


__all__ = [
    "plan_ca_block",
    "ca_block",
    "plan_se_block",
    "se_block",
    "plan_attention",
    "attention",
    "plan_shuffle_s1",
    "shuffle_block_s1",
    "plan_two_branch",
    "shuffle_block_s2",
    "reduce_block",
    "plan_vanilla",
    "vanilla_block",
    "plan_maxpool_down",
    "maxpool_down",
]
