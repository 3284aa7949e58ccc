from __future__ import annotations

from typing import Literal, Sequence

from rich.table import Table

from src.cagan.config import NetConfig
from src.cagan.discriminator import plan_discriminator
from src.cagan.generator import plan_generator
from src.cagan.layers import LayerSpec

Model = Literal["generator", "discriminator"]


def model_plan(cfg: NetConfig, model: Model = "generator") -> list[LayerSpec]:
    return plan_generator(cfg) if model == "generator" else plan_discriminator(cfg)


def count_params(cfg: NetConfig, model: Model = "generator") -> int:
    return sum(spec.param_count for spec in model_plan(cfg, model))


def count_flops(cfg: NetConfig, height: int, width: int, model: Model = "generator") -> int:
    """Multiply-accumulates of every conv layer for one (height, width) input."""
    return sum(spec.macs(height, width) for spec in model_plan(cfg, model))


def layer_table(plan: Sequence[LayerSpec], height: int, width: int, title: str) -> Table:
    table = Table(title=title)
    table.add_column("layer")
    table.add_column("kind")
    table.add_column("weight shape")
    table.add_column("params", justify="right")
    table.add_column("MACs", justify="right")
    total_params = total_macs = 0
    for spec in plan:
        macs = spec.macs(height, width)
        total_params += spec.param_count
        total_macs += macs
        table.add_row(spec.name, spec.kind, "x".join(str(d) for d in spec.weight_shape), f"{spec.param_count:,}", f"{macs:,}")
    table.add_section()
    table.add_row("total", "", "", f"{total_params:,}", f"{total_macs:,}")
    return table


def describe(cfg: NetConfig, height: int, width: int) -> list[Table]:
    """Layer tables for the generator and the discriminator at the given input size."""
    return [
        layer_table(plan_generator(cfg), height, width, f"generator @ {height}x{width}"),
        layer_table(plan_discriminator(cfg), height, width, f"discriminator @ {height}x{width}"),
    ]


__all__ = ["count_params", "count_flops", "describe", "layer_table", "model_plan"]
