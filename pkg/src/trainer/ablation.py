from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from rich.table import Table

from src.cagan.complexity import count_flops, count_params
from src.objectives.metrics import ssim_value
from src.trainer.config import ExperimentConfig
from src.trainer.dataset import Dataset, stack
from src.trainer.train import load_trained, mean_psnr, radon_predictions, train_stage
from src.utils.config_loader import build_model


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    name: str
    overrides: Mapping[str, Any]


DEFAULT_VARIANTS: tuple[Variant, ...] = (
    Variant("ca-outside", {}),
    Variant("no-attention", {"net.block.attention": "none"}),
    Variant("se-outside", {"net.block.attention": "SE"}),
    Variant("ca-inside", {"net.block.placement": "inside"}),
    Variant("batch-norm", {"net.block.norm": "BN"}),
    Variant("r8", {"net.block.reduction": 8}),
    Variant("r4", {"net.block.reduction": 4}),
    Variant("g16", {"net.block.shuffle_groups": 16}),
    Variant("g8", {"net.block.shuffle_groups": 8}),
    Variant("maxpool", {"net.block.downsample": "maxpool"}),
    Variant("vanilla", {"net.block.conv_kind": "vanilla"}),
    Variant("no-discriminator", {"loss.discriminator": False, "loss.weights.adversarial": 0.0}),
)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    params: int
    macs: int
    val_psnr: float
    val_ssim: float


ABLATION_COLUMNS = [f.name for f in fields(AblationRow)]


def variant_config(base: ExperimentConfig, variant: Variant) -> ExperimentConfig:
    return build_model(ExperimentConfig, base.model_dump(mode="json"), variant.overrides)


def radon_validation(cfg: ExperimentConfig, dataset: Dataset, run_dir: str | os.PathLike[str]) -> tuple[float, float]:
    """Mean Radon-domain PSNR/SSIM of the trained stage-1 generator on the validation split."""
    samples = dataset["val"]
    if not samples:
        return float("nan"), float("nan")
    models = load_trained(cfg, run_dir, ["radon"])
    pred = radon_predictions(models, samples)
    truth = stack(samples, "r_gt")[:, 0, : cfg.views.full]
    data_range = float(truth.max() - truth.min()) or 1.0
    ssim_cfg = cfg.ssim.model_copy(update={"data_range": data_range})
    ssim_mean = float(np.mean([ssim_value(p, t, ssim_cfg) for p, t in zip(pred, truth)]))
    return mean_psnr(pred, truth), ssim_mean


def ablation_suite(
    dataset: Dataset,
    out_dir: str | os.PathLike[str],
    variants: Sequence[Variant] = DEFAULT_VARIANTS,
) -> List[AblationRow]:
    """Train the Radon-domain stage once per variant on a shared dataset, schedule and seed."""
    out_dir = Path(out_dir)
    base = dataset.config
    rows: List[AblationRow] = []
    for variant in variants:
        cfg = variant_config(base, variant)
        run_dir = out_dir / variant.name
        train_stage("radon", dataclasses.replace(dataset, config=cfg), run_dir)
        psnr_v, ssim_v = radon_validation(cfg, dataset, run_dir)
        row = AblationRow(
            variant=variant.name,
            params=count_params(cfg.net),
            macs=count_flops(cfg.net, cfg.views.padded, cfg.phantom.size),
            val_psnr=psnr_v,
            val_ssim=ssim_v,
        )
        logger.info("ablation %s params=%d val_psnr=%.4f val_ssim=%.4f", row.variant, row.params, psnr_v, ssim_v)
        rows.append(row)
    write_ablation_csv(out_dir / "ablation.csv", rows)
    return rows


def write_ablation_csv(path: str | os.PathLike[str], rows: Sequence[AblationRow]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for r in rows:
            writer.writerow([r.variant, r.params, r.macs, f"{r.val_psnr:.6f}", f"{r.val_ssim:.6f}"])


def ablation_table(rows: Sequence[AblationRow], reference: Optional[str] = None) -> Table:
    """Rich table; ``reference`` adds a params ratio column against that variant."""
    ref: Dict[str, AblationRow] = {r.variant: r for r in rows}
    table = Table(title="ablation")
    for col in ("variant", "params", "MACs", "val PSNR", "val SSIM"):
        table.add_column(col, justify="left" if col == "variant" else "right")
    if reference in ref:
        table.add_column(f"params / {reference}", justify="right")
    for r in rows:
        cells = [r.variant, f"{r.params:,}", f"{r.macs:,}", f"{r.val_psnr:.3f}", f"{r.val_ssim:.4f}"]
        if reference in ref:
            cells.append(f"{r.params / ref[reference].params:.2f}")
        table.add_row(*cells)
    return table


__all__ = [
    "Variant",
    "DEFAULT_VARIANTS",
    "AblationRow",
    "ABLATION_COLUMNS",
    "variant_config",
    "radon_validation",
    "ablation_suite",
    "write_ablation_csv",
    "ablation_table",
]
