from __future__ import annotations

from math import gcd
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class BlockConfig(BaseModel):
    """Per-block switches; the ablation axes of the network."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    norm: Literal["GN", "BN"] = "GN"
    gn_groups: int = Field(default=8, ge=1)
    shuffle_groups: int = Field(default=32, ge=1)
    attention: Literal["CA", "SE", "none"] = "CA"
    placement: Literal["inside", "outside"] = "outside"
    reduction: int = Field(default=16, ge=1)
    downsample: Literal["strided-shuffle", "maxpool"] = "strided-shuffle"
    conv_kind: Literal["shuffle", "vanilla"] = "shuffle"


class NetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    in_channels: int = Field(default=1, ge=1)
    out_channels: int = Field(default=1, ge=1)
    stage_channels: List[int] = Field(default_factory=lambda: [32, 64, 128, 256])
    bottleneck_channels: int = Field(default=512, ge=2)
    block: BlockConfig = Field(default_factory=BlockConfig)

    @model_validator(mode="after")
    def _check_widths(self) -> "NetConfig":
        if len(self.stage_channels) != 4:
            raise ValueError(f"exactly 4 encoder stages are required, got {len(self.stage_channels)}")
        widths = [*self.stage_channels, self.bottleneck_channels]
        b = self.block
        for c in widths:
            if c < 2 or c % 2:
                raise ValueError(f"stage width {c} must be even")
            if c % b.shuffle_groups:
                raise ValueError(f"shuffle groups {b.shuffle_groups} do not divide stage width {c}")
            if b.norm == "GN" and ((c // 2) % b.gn_groups or c % b.gn_groups):
                raise ValueError(f"GN groups {b.gn_groups} do not divide stage width {c} and its half")
        if b.attention != "none" and b.reduction > min(self.stage_channels):
            raise ValueError(f"reduction {b.reduction} exceeds the narrowest stage ({min(self.stage_channels)})")
        return self

    @property
    def depth(self) -> int:
        return len(self.stage_channels)

    @property
    def size_multiple(self) -> int:
        return 2 ** self.depth


def mid_channels(channels: int, reduction: int) -> int:
    """Bottleneck width of an attention block."""
    return max(1, channels // reduction)


def norm_groups(cfg: BlockConfig, channels: int) -> int:
    """GN groups for a layer of ``channels``; attention bottlenecks may be narrower than gn_groups."""
    return gcd(cfg.gn_groups, channels)


__all__ = ["BlockConfig", "NetConfig", "mid_channels", "norm_groups"]
