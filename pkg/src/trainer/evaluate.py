"""Reconstruction pipelines scored against the phantoms inside the inscribed circle."""

from __future__ import annotations

import logging
import os
import time
from pathlib import Path
from typing import Callable, Iterable, List, Literal, Optional, Sequence

import numpy as np
from rich.table import Table

from src.core.errors import ConfigError, UsageError
from src.core.pgm import save_image
from src.core.phantom import inscribed_mask
from src.core.types import Image
from src.objectives.metrics import MetricsRecord, masked, psnr, ssim_value, summarize, write_metrics_csv
from src.sino.pipeline import crop_views
from src.tomo.fbp import fbp
from src.tomo.sart import sart_tv
from src.trainer.checkpoint import has_checkpoint
from src.trainer.config import ExperimentConfig
from src.trainer.dataset import Dataset, Sample, degrade
from src.trainer.models import DualDomainModels
from src.trainer.train import load_trained
from src.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

Pipeline = Literal["fbp", "interp-fbp", "sart-tv", "stage1-fbp", "fbp-stage2", "dual"]
PIPELINES: tuple[str, ...] = ("fbp", "interp-fbp", "sart-tv", "stage1-fbp", "fbp-stage2", "dual")
CLASSICAL: tuple[str, ...] = ("fbp", "interp-fbp", "sart-tv")
ROI_SUFFIX = "@roi"


def required_stages(pipeline: str, run_dir: str | os.PathLike[str]) -> list[str]:
    """Checkpoints a learned pipeline loads; ``dual`` prefers the end-to-end one."""
    if pipeline == "stage1-fbp":
        return ["radon"]
    if pipeline == "fbp-stage2":
        return ["image"]
    if pipeline == "dual":
        return ["end2end"] if has_checkpoint(run_dir, "end2end") else ["radon", "image"]
    return []


def _interp_fbp(cfg: ExperimentConfig, sample: Sample) -> np.ndarray:
    return fbp(crop_views(sample.r_fv, cfg.views.full), cfg.phantom.size, cfg.fbp_window).pixels


def reconstructor(
    pipeline: str,
    cfg: ExperimentConfig,
    models: Optional[DualDomainModels] = None,
) -> Callable[[Sample], np.ndarray]:
    """Sample -> (S, S) reconstruction for one named pipeline."""
    size, window = cfg.phantom.size, cfg.fbp_window
    if pipeline == "fbp":
        return lambda s: fbp(s.r_sv, size, window).pixels
    if pipeline == "interp-fbp":
        return lambda s: _interp_fbp(cfg, s)
    if pipeline == "sart-tv":
        return lambda s: sart_tv(s.r_sv, size, cfg.sart).pixels
    if pipeline not in PIPELINES:
        raise UsageError(f"unknown pipeline {pipeline!r}; choose from {', '.join(PIPELINES)}")
    if models is None:
        raise UsageError(f"pipeline {pipeline} needs trained models")
    if pipeline == "stage1-fbp":
        return lambda s: models.stage1_images(s.r_fv.samples[np.newaxis, np.newaxis].astype(cfg.dtype))[0, 0]
    if pipeline == "fbp-stage2":
        return lambda s: models.image_only(_interp_fbp(cfg, s)[np.newaxis, np.newaxis])[0, 0]
    return lambda s: models.dual(s.r_fv.samples[np.newaxis, np.newaxis].astype(cfg.dtype))[0, 0]


def _check_roi(cfg: ExperimentConfig) -> Optional[tuple[int, int, int]]:
    if cfg.eval.roi is None:
        return None
    row, col, side = cfg.eval.roi
    if side < cfg.ssim.window:
        raise ConfigError(f"roi side {side} is smaller than the SSIM window {cfg.ssim.window}", key="eval.roi")
    return row, col, side


def score(
    samples: Sequence[Sample],
    reconstructions: Sequence[np.ndarray],
    seconds: Sequence[float],
    cfg: ExperimentConfig,
    stage: str,
) -> List[MetricsRecord]:
    """PSNR/SSIM of masked reconstructions; the data range spans the whole ground-truth set.

    ``views`` is the number of measured angles a sample started from, also for
    pipelines that interpolate to the full view set first.
    """
    mask = inscribed_mask(cfg.phantom.size)
    truths = [masked(s.phantom, mask) for s in samples]
    data_range = float(max(t.max() for t in truths) - min(t.min() for t in truths)) or 1.0
    ssim_cfg = cfg.ssim.model_copy(update={"data_range": data_range})
    roi = _check_roi(cfg)
    records: List[MetricsRecord] = []
    for sample, truth, recon, secs in zip(samples, truths, reconstructions, seconds):
        pred = masked(recon.astype(np.float64), mask)
        views = sample.r_sv.views
        records.append(
            MetricsRecord(sample.sample_id, stage, views, psnr(pred, truth, data_range), ssim_value(pred, truth, ssim_cfg), secs, data_range)
        )
        if roi is not None:
            row, col, side = roi
            patch = (slice(row, row + side), slice(col, col + side))
            records.append(
                MetricsRecord(
                    sample.sample_id,
                    f"{stage}{ROI_SUFFIX}",
                    views,
                    psnr(pred[patch], truth[patch], data_range),
                    ssim_value(pred[patch], truth[patch], ssim_cfg),
                    secs,
                    data_range,
                )
            )
    return records


def run_pipeline(
    fn: Callable[[Sample], np.ndarray],
    samples: Sequence[Sample],
    cfg: ExperimentConfig,
    *,
    workers: Optional[int] = None,
) -> tuple[list[np.ndarray], list[float]]:
    def timed(sample: Sample) -> tuple[np.ndarray, float]:
        t0 = time.perf_counter()
        out = fn(sample)
        return out, (time.perf_counter() - t0) if cfg.eval.record_timing else 0.0

    results = ordered_map(timed, samples, workers=workers)
    return [r for r, _ in results], [t for _, t in results]


def evaluate(
    pipeline: str,
    dataset: Dataset,
    *,
    run_dir: str | os.PathLike[str] | None = None,
    models: Optional[DualDomainModels] = None,
    split: str = "test",
    montage_dir: str | os.PathLike[str] | None = None,
    workers: Optional[int] = None,
) -> List[MetricsRecord]:
    """Score one pipeline on a split; learned pipelines load their checkpoints from ``run_dir``."""
    cfg = dataset.config
    samples = dataset[split]
    if not samples:
        raise UsageError(f"split {split!r} is empty")
    if models is None and pipeline not in CLASSICAL:
        if run_dir is None:
            raise UsageError(f"pipeline {pipeline} needs a run directory with checkpoints")
        models = load_trained(cfg, run_dir, required_stages(pipeline, run_dir))
    recons, seconds = run_pipeline(reconstructor(pipeline, cfg, models), samples, cfg, workers=workers)
    records = score(samples, recons, seconds, cfg, pipeline)
    if montage_dir is not None and cfg.eval.montage_samples:
        write_montage(Path(montage_dir) / f"montage-{pipeline}.pgm", samples, recons, cfg.eval.montage_samples)
    logger.info("evaluated %s on %d %s samples", pipeline, len(samples), split)
    return records


def write_montage(path: str | os.PathLike[str], samples: Sequence[Sample], recons: Sequence[np.ndarray], count: int) -> Path:
    """Rows of [phantom | reconstruction] for the first ``count`` samples, one shared gray range."""
    rows = [np.hstack([s.phantom, r]) for s, r in list(zip(samples, recons))[:count]]
    grid = np.vstack(rows)
    truth = np.stack([s.phantom for s in samples[:count]])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(path, Image(pixels=grid), data_range=(float(truth.min()), float(truth.max())))
    return path


def evaluate_pipelines(
    pipelines: Iterable[str],
    dataset: Dataset,
    out_csv: str | os.PathLike[str],
    *,
    run_dir: str | os.PathLike[str] | None = None,
    split: str = "test",
    workers: Optional[int] = None,
) -> List[MetricsRecord]:
    """Evaluate several pipelines into one metrics CSV with montages beside it."""
    out_csv = Path(out_csv)
    records: List[MetricsRecord] = []
    for pipeline in pipelines:
        records += evaluate(pipeline, dataset, run_dir=run_dir, split=split, montage_dir=out_csv.parent, workers=workers)
    write_metrics_csv(out_csv, records)
    return records


def evaluate_sparsity_sweep(
    dataset: Dataset,
    views: Sequence[int],
    methods: Sequence[str] = CLASSICAL,
    *,
    split: str = "test",
    workers: Optional[int] = None,
) -> List[MetricsRecord]:
    """Classical baselines re-run at several sparse view counts from the stored full-view sinograms."""
    cfg = dataset.config
    unknown = [m for m in methods if m not in CLASSICAL]
    if unknown:
        raise UsageError(f"sparsity sweep supports {', '.join(CLASSICAL)}, not {', '.join(unknown)}")
    base = dataset[split]
    records: List[MetricsRecord] = []
    for v in views:

        def resample(sample: Sample, v: int = v) -> Sample:
            r_gt = crop_views(sample.r_gt, cfg.views.full)
            r_sv, r_fv = degrade(cfg, r_gt, dataset.mu_scale, sample.sample_id, v)
            return Sample(sample.sample_id, sample.split, sample.phantom, sample.r_gt, r_sv, r_fv)

        samples = ordered_map(resample, base, workers=workers)
        for method in methods:
            recons, seconds = run_pipeline(reconstructor(method, cfg), samples, cfg, workers=workers)
            records += score(samples, recons, seconds, cfg, method)
        logger.info("sparsity sweep views=%d done", v)
    return records


def summary_table(records: Iterable[MetricsRecord], title: str = "mean metrics") -> Table:
    table = Table(title=title)
    table.add_column("pipeline")
    table.add_column("PSNR (dB)", justify="right")
    table.add_column("SSIM", justify="right")
    for stage, (p, s) in summarize(records).items():
        table.add_row(stage, f"{p:.3f}", f"{s:.4f}")
    return table


__all__ = [
    "PIPELINES",
    "CLASSICAL",
    "Pipeline",
    "required_stages",
    "reconstructor",
    "score",
    "run_pipeline",
    "evaluate",
    "evaluate_pipelines",
    "evaluate_sparsity_sweep",
    "write_montage",
    "summary_table",
]
