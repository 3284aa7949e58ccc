"""Layer plans: the single description from which parameters are created and counted."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from src.core.rng import Rng
from src.autodiff.conv import conv2d, conv_transpose2d
from src.autodiff.norm import batch_norm, group_norm
from src.autodiff.params import ModelParams, ParamScope
from src.autodiff.tensor import Tensor, get_default_dtype
from src.cagan.config import BlockConfig, norm_groups

LayerKind = Literal["conv", "conv_transpose", "norm"]
# spatial positions a layer's output covers: full map, pooled H+W strip, one axis, or a single pixel
Positions = Literal["full", "coord", "h", "w", "global"]


@dataclass(frozen=True)
class LayerSpec:
    """One parameterized layer. ``scale`` is the downsampling factor of the map the
    layer's MACs are counted on: its output for convs and norms, its input for
    transposed convs (each input pixel touches the whole kernel once)."""

    name: str
    kind: LayerKind
    cin: int
    cout: int
    kernel: int = 1
    stride: int = 1
    groups: int = 1
    bias: bool = False
    scale: int = 1
    positions: Positions = "full"
    norm: str = "GN"

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "conv":
            return (self.cout, self.cin // self.groups, self.kernel, self.kernel)
        if self.kind == "conv_transpose":
            return (self.cin, self.cout, self.kernel, self.kernel)
        return (self.cout,)

    @property
    def param_count(self) -> int:
        if self.kind == "norm":
            return 2 * self.cout
        return int(np.prod(self.weight_shape)) + (self.cout if self.bias else 0)

    def output_positions(self, height: int, width: int) -> int:
        h, w = height // self.scale, width // self.scale
        return {"full": h * w, "coord": h + w, "h": h, "w": w, "global": 1}[self.positions]

    def macs(self, height: int, width: int) -> int:
        if self.kind == "norm":
            return 0
        return int(np.prod(self.weight_shape)) * self.output_positions(height, width)


def conv_spec(name: str, cin: int, cout: int, *, kernel: int = 1, stride: int = 1, groups: int = 1, bias: bool = False, scale: int = 1, positions: Positions = "full") -> LayerSpec:
    return LayerSpec(name, "conv", cin, cout, kernel, stride, groups, bias, scale, positions)


def norm_spec(name: str, channels: int, cfg: BlockConfig, *, scale: int = 1) -> LayerSpec:
    return LayerSpec(name, "norm", channels, channels, scale=scale, norm=cfg.norm)


def init_params(name: str, plan: Sequence[LayerSpec], rng: Rng, dtype: Optional[np.dtype] = None) -> ModelParams:
    """He-normal conv weights, zero biases, unit norm scales; BN layers also get running buffers."""
    dtype = np.dtype(dtype or get_default_dtype())
    gen = rng.numpy_generator()
    params = ModelParams(name)
    for spec in plan:
        if spec.kind == "norm":
            params.add(f"{spec.name}.gamma", np.ones(spec.cout, dtype=dtype))
            params.add(f"{spec.name}.beta", np.zeros(spec.cout, dtype=dtype))
            if spec.norm == "BN":
                params.add_buffer(f"{spec.name}.running_mean", np.zeros(spec.cout, dtype=dtype))
                params.add_buffer(f"{spec.name}.running_var", np.ones(spec.cout, dtype=dtype))
            continue
        if spec.kind == "conv":
            fan_in = spec.cin // spec.groups * spec.kernel * spec.kernel
        else:
            fan_in = spec.cin * spec.kernel * spec.kernel
        weight = gen.standard_normal(spec.weight_shape) * np.sqrt(2.0 / fan_in)
        params.add(f"{spec.name}.weight", weight.astype(dtype))
        if spec.bias:
            params.add(f"{spec.name}.bias", np.zeros(spec.cout, dtype=dtype))
    return params


# -- forward helpers shared by the blocks -------------------------------------------

def apply_conv(x: Tensor, scope: ParamScope, name: str, *, stride: int = 1, padding: int = 0, groups: int = 1, bias: bool = False) -> Tensor:
    layer = scope.child(name)
    return conv2d(x, layer["weight"], layer["bias"] if bias else None, stride=stride, padding=padding, groups=groups)


def apply_conv_transpose(x: Tensor, scope: ParamScope, name: str) -> Tensor:
    layer = scope.child(name)
    return conv_transpose2d(x, layer["weight"], layer["bias"], stride=2)


def apply_norm(x: Tensor, scope: ParamScope, name: str, cfg: BlockConfig) -> Tensor:
    layer = scope.child(name)
    if cfg.norm == "BN":
        return batch_norm(
            x,
            layer["gamma"],
            layer["beta"],
            layer.buffer("running_mean"),
            layer.buffer("running_var"),
            training=scope.training,
        )
    return group_norm(x, norm_groups(cfg, x.shape[1]), layer["gamma"], layer["beta"])


__all__ = [
    "LayerSpec",
    "conv_spec",
    "norm_spec",
    "init_params",
    "apply_conv",
    "apply_conv_transpose",
    "apply_norm",
]
