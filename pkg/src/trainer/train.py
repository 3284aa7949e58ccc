"""Three-stage adversarial training: Radon domain, image domain, then both end to end."""

from __future__ import annotations

import contextlib
import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from src.core.errors import ConfigError, FormatError, NumericalFailureError
from src.core.rng import Rng, derive_seed
from src.autodiff.optim import AdamState, adam_step
from src.autodiff.params import ModelParams
from src.autodiff.tensor import Tensor, no_grad
from src.objectives.losses import disc_loss, gen_loss, total_loss
from src.objectives.metrics import masked, psnr
from src.core.phantom import inscribed_mask
from src.trainer.checkpoint import (
    checkpoint_entries,
    has_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from src.trainer.config import ExperimentConfig, Stage
from src.trainer.dataset import Dataset, Sample, stack
from src.trainer.models import DOMAINS, DualDomainModels, fit_norms


logger = logging.getLogger(__name__)

CURVE_NAME = "training_curve.csv"
EVAL_CHUNK = 8

STAGE_DOMAINS: Dict[str, tuple[str, ...]] = {"radon": ("radon",), "image": ("image",), "end2end": DOMAINS}
PREREQUISITES: Dict[str, tuple[str, ...]] = {"radon": (), "image": ("radon",), "end2end": ("radon", "image")}


@dataclass(frozen=True)
class EpochRecord:
    stage: str
    epoch: int
    gen_loss: float
    disc_loss: float
    val_psnr: float


CURVE_COLUMNS = [f.name for f in fields(EpochRecord)]


# -- training curve --------------------------------------------------------------------

def read_curve(path: str | os.PathLike[str]) -> List[EpochRecord]:
    if not Path(path).is_file():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CURVE_COLUMNS:
            raise FormatError(f"training curve columns {reader.fieldnames} != {CURVE_COLUMNS}")
        return [
            EpochRecord(
                stage=row["stage"],
                epoch=int(row["epoch"]),
                gen_loss=float(row["gen_loss"]),
                disc_loss=float(row["disc_loss"]),
                val_psnr=float(row["val_psnr"]),
            )
            for row in reader
        ]


def write_curve(path: str | os.PathLike[str], records: Sequence[EpochRecord]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for rec in records:
            writer.writerow([v if isinstance(v, (str, int)) else f"{v:.6f}" for v in asdict(rec).values()])


# -- helpers ---------------------------------------------------------------------------

def _chunks(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _check_finite(loss: Tensor, what: str, step: int) -> None:
    if not math.isfinite(loss.item()):
        raise NumericalFailureError(f"non-finite {what}", iteration=step)


@contextlib.contextmanager
def _frozen(models: Sequence[ModelParams]) -> Iterator[None]:
    for m in models:
        m.set_requires_grad(False)
    try:
        yield
    finally:
        for m in models:
            m.set_requires_grad(True)


def radon_predictions(models: DualDomainModels, samples: Sequence[Sample]) -> np.ndarray:
    """Repaired full-view sinograms (N, views, detectors) in physical units, padding cropped."""
    cfg = models.cfg
    r_fv = stack(samples, "r_fv", cfg.dtype)
    out = []
    with no_grad():
        for sl in _chunks(len(samples), EVAL_CHUNK):
            pred = models.repair_radon(Tensor(r_fv[sl]))
            out.append(models.norms["radon"].invert(pred.data.astype(np.float64)))
    return np.concatenate(out)[:, 0, : cfg.views.full] if out else np.zeros((0, cfg.views.full, cfg.phantom.size))


def stage1_images(models: DualDomainModels, samples: Sequence[Sample]) -> np.ndarray:
    """FBP(crop(G_R(R_fv))) for every sample, (N, 1, S, S)."""
    r_fv = stack(samples, "r_fv", models.cfg.dtype)
    return np.concatenate([models.stage1_images(r_fv[sl]) for sl in _chunks(len(samples), EVAL_CHUNK)])


def dual_images(models: DualDomainModels, samples: Sequence[Sample]) -> np.ndarray:
    r_fv = stack(samples, "r_fv", models.cfg.dtype)
    return np.concatenate([models.dual(r_fv[sl]) for sl in _chunks(len(samples), EVAL_CHUNK)])


def mean_psnr(pred: np.ndarray, truth: np.ndarray, *, mask: Optional[np.ndarray] = None) -> float:
    """Mean per-sample PSNR with the data range of the whole truth set."""
    if len(truth) == 0:
        return math.nan
    data_range = float(truth.max() - truth.min()) or 1.0
    return float(np.mean([psnr(masked(p, mask), masked(t, mask), data_range) for p, t in zip(pred, truth)]))


def validation_psnr(stage: str, models: DualDomainModels, samples: Sequence[Sample]) -> float:
    if not samples:
        return math.nan
    models.set_training(False)
    try:
        if stage == "radon":
            truth = stack(samples, "r_gt")[:, 0, : models.cfg.views.full]
            return mean_psnr(radon_predictions(models, samples), truth)
        mask = inscribed_mask(models.cfg.phantom.size)
        truth = stack(samples, "phantom")[:, 0]
        return mean_psnr(dual_images(models, samples)[:, 0], truth, mask=mask)
    finally:
        models.set_training(True)


# -- one optimization step ---------------------------------------------------------------

class StageStepper:
    """Per-batch G-then-D update of one stage; the D step sees detached fakes only."""

    def __init__(self, stage: str, models: DualDomainModels, optimizers: Dict[str, AdamState], dataset: Dataset) -> None:
        self.stage = stage
        self.models = models
        self.optimizers = optimizers
        self.cfg = models.cfg
        self.domains = STAGE_DOMAINS[stage]
        train = dataset["train"]
        dtype = self.cfg.dtype
        norms = models.norms
        self.r_fv = stack(train, "r_fv", dtype)
        self.r_gt = norms["radon"].apply(stack(train, "r_gt")).astype(dtype)
        self.phantom = norms["image"].apply(stack(train, "phantom")).astype(dtype)
        self.image_inputs: Optional[np.ndarray] = None
        if stage == "image":
            models.generators["radon"].eval()
            self.image_inputs = stage1_images(models, train).astype(dtype)

    def _gen_term(self, domain: str, pred: Tensor, target: np.ndarray) -> Tensor:
        weights = self.cfg.loss.weights
        d_fake = self.models.discriminate(domain, pred) if weights.adversarial else None
        return gen_loss(pred, Tensor(target), d_fake, weights, self.cfg.ssim)

    def _disc_step(self, domain: str, real: np.ndarray, fake: Tensor, lr: float, step: int) -> float:
        disc = self.models.discriminator(domain)
        if disc is None:
            return math.nan
        d_real = self.models.discriminate(domain, Tensor(real))
        d_fake = self.models.discriminate(domain, fake.detach())
        loss = disc_loss(d_real, d_fake, log_form=self.cfg.loss.log_disc_loss)
        _check_finite(loss, f"{domain} discriminator loss", step)
        loss.backward()
        adam_step(disc, self.optimizers[disc.name], lr)
        return loss.item()

    def __call__(self, idx: np.ndarray, lr: float, step: int) -> tuple[float, float]:
        models = self.models
        discs = [models.discriminators[d] for d in self.domains if d in models.discriminators]
        with _frozen(discs):
            if self.stage == "radon":
                pred = {"radon": models.repair_radon(Tensor(self.r_fv[idx]))}
                loss = self._gen_term("radon", pred["radon"], self.r_gt[idx])
            elif self.stage == "image":
                pred = {"image": models.repair_image(Tensor(self.image_inputs[idx]))}
                loss = self._gen_term("image", pred["image"], self.phantom[idx])
            else:
                pred_r = models.repair_radon(Tensor(self.r_fv[idx]))
                pred_i = models.repair_image(models.reconstruct(pred_r))
                pred = {"radon": pred_r, "image": pred_i}
                loss = total_loss(
                    self._gen_term("radon", pred_r, self.r_gt[idx]),
                    self._gen_term("image", pred_i, self.phantom[idx]),
                )
            _check_finite(loss, f"{self.stage} generator loss", step)
            loss.backward()
        for domain in self.domains:
            gen = models.generators[domain]
            adam_step(gen, self.optimizers[gen.name], lr)

        reals = {"radon": self.r_gt, "image": self.phantom}
        d_losses = [self._disc_step(d, reals[d][idx], pred[d], lr, step) for d in self.domains]
        finite = [v for v in d_losses if not math.isnan(v)]
        return loss.item(), (sum(finite) if finite else math.nan)


# -- stage driver ----------------------------------------------------------------------

def _prepare_models(stage: str, dataset: Dataset, run_dir: Path) -> DualDomainModels:
    cfg = dataset.config
    models = DualDomainModels.initialize(cfg, fit_norms(dataset))
    for prereq in PREREQUISITES[stage]:
        _, norms = load_checkpoint(run_dir, prereq, cfg, models.stage_models((prereq,)))
        models.norms.update(norms)
    return models


def train_stage(
    stage: Stage,
    dataset: Dataset,
    run_dir: str | os.PathLike[str],
    *,
    resume: bool = False,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> Path:
    """Train one stage for its scheduled epochs, checkpointing after every epoch.

    ``image`` needs the ``radon`` checkpoint; ``end2end`` needs both. With
    ``resume`` the stage continues from its own checkpoint, optimizer state included.
    """
    run_dir = Path(run_dir)
    cfg = dataset.config
    schedule = cfg.schedules.for_stage(stage)
    domains = STAGE_DOMAINS[stage]
    models = _prepare_models(stage, dataset, run_dir)
    optimizers = models.optimizers(domains)
    stage_models = models.stage_models(domains)
    names = [m.name for m in stage_models]

    start = 0
    if resume and has_checkpoint(run_dir, stage):
        info, norms = load_checkpoint(run_dir, stage, cfg, stage_models, optimizers)
        models.norms.update(norms)
        start = info.epoch
        logger.info("resuming %s at epoch %d/%d", stage, start + 1, schedule.epochs)

    n_train = len(dataset["train"])
    n_batches = n_train // schedule.batch_size
    if n_batches == 0:
        raise ConfigError(
            f"batch size {schedule.batch_size} exceeds the {n_train} training samples",
            key=f"schedules.{stage}.batch_size",
        )

    curve_path = run_dir / CURVE_NAME
    curve = [r for r in read_curve(curve_path) if r.stage != stage or r.epoch <= start]
    stepper = StageStepper(stage, models, optimizers, dataset)
    tnsr_path = run_dir / "checkpoints" / f"{stage}.tnsr"

    for epoch in range(start, schedule.epochs):
        snapshot = checkpoint_entries(stage_models, optimizers, models.norms)
        lr = schedule.lr(epoch)
        order = np.asarray(Rng(derive_seed(cfg.seed, stage, epoch)).permutation(n_train))
        for m in stage_models:
            m.train()
        gen_losses: list[float] = []
        disc_losses: list[float] = []
        for b in range(n_batches):
            idx = order[b * schedule.batch_size : (b + 1) * schedule.batch_size]
            try:
                g, d = stepper(idx, lr, epoch * n_batches + b)
            except NumericalFailureError:
                path = save_checkpoint(run_dir, stage, epoch, cfg, snapshot, names, diverged=True)
                logger.error("%s training diverged in epoch %d; diagnostic checkpoint %s", stage, epoch + 1, path)
                raise
            gen_losses.append(g)
            disc_losses.append(d)

        record = EpochRecord(
            stage=stage,
            epoch=epoch + 1,
            gen_loss=float(np.mean(gen_losses)),
            disc_loss=float(np.mean(disc_losses)),
            val_psnr=validation_psnr(stage, models, dataset["val"]),
        )
        curve.append(record)
        write_curve(curve_path, curve)
        tnsr_path = save_checkpoint(
            run_dir, stage, epoch + 1, cfg, checkpoint_entries(stage_models, optimizers, models.norms), names
        )
        logger.info(
            "epoch %d/%d stage=%s gen_loss=%.6f disc_loss=%.6f val_psnr=%.4f",
            record.epoch, schedule.epochs, stage, record.gen_loss, record.disc_loss, record.val_psnr,
        )
        if on_epoch is not None:
            on_epoch(record)
    return tnsr_path


def train_all(dataset: Dataset, run_dir: str | os.PathLike[str], *, resume: bool = False) -> Path:
    path = Path(run_dir)
    for stage in ("radon", "image", "end2end"):
        path = train_stage(stage, dataset, run_dir, resume=resume)
    return path


def load_trained(
    cfg: ExperimentConfig,
    run_dir: str | os.PathLike[str],
    stages: Sequence[str],
) -> DualDomainModels:
    """Models restored from the named stage checkpoints, later stages overriding earlier ones."""
    models = DualDomainModels.initialize(cfg, {})
    models.discriminators.clear()
    for stage in stages:
        domains = STAGE_DOMAINS[stage]
        _, norms = load_checkpoint(run_dir, stage, cfg, [models.generators[d] for d in domains])
        models.norms.update(norms)
    models.set_training(False)
    return models


__all__ = [
    "EpochRecord",
    "CURVE_COLUMNS",
    "CURVE_NAME",
    "STAGE_DOMAINS",
    "read_curve",
    "write_curve",
    "radon_predictions",
    "stage1_images",
    "dual_images",
    "mean_psnr",
    "validation_psnr",
    "StageStepper",
    "train_stage",
    "train_all",
    "load_trained",
]
