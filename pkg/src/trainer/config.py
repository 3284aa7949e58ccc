"""Experiment configuration: one frozen pydantic tree addressed by dotted RunConfig keys."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, List, Literal, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.errors import ConfigError, MissingArtifactError
from src.cagan.config import NetConfig
from src.objectives.losses import LossWeights, SsimConfig
from src.tomo.geometry import SartConfig
from src.utils.config_loader import (
    build_model,
    config_hash,
    flatten,
    parse_run_config,
    serialize_run_config,
)


Stage = Literal["radon", "image", "end2end"]
STAGES: tuple[Stage, ...] = ("radon", "image", "end2end")

_FROZEN = ConfigDict(frozen=True, extra="forbid")


class PhantomSettings(BaseModel):
    model_config = _FROZEN

    kind: Literal["random-ellipses", "shepp-logan"] = "random-ellipses"
    size: int = Field(default=64, ge=16)
    ellipse_count: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _check_size(self) -> "PhantomSettings":
        if self.size % 16:
            raise ValueError(f"phantom size {self.size} is not divisible by 16")
        return self


class SplitSettings(BaseModel):
    model_config = _FROZEN

    train: int = Field(default=200, ge=1)
    val: int = Field(default=40, ge=0)
    test: int = Field(default=40, ge=0)

    def sizes(self) -> dict[str, int]:
        return {"train": self.train, "val": self.val, "test": self.test}


class ViewSettings(BaseModel):
    model_config = _FROZEN

    full: int = Field(default=180, ge=2)
    sparse: int = Field(default=45, ge=2)
    padded: int = Field(default=192, ge=16)

    @model_validator(mode="after")
    def _check_views(self) -> "ViewSettings":
        if self.full % self.sparse:
            raise ValueError(f"sparse view count {self.sparse} does not divide {self.full}")
        if self.padded % 16:
            raise ValueError(f"padded view count {self.padded} is not divisible by 16")
        if not self.full <= self.padded <= 2 * self.full:
            raise ValueError(f"padded view count {self.padded} must lie in [{self.full}, {2 * self.full}]")
        return self


class NoiseSettings(BaseModel):
    model_config = _FROZEN

    enabled: bool = True
    incident_photons: float = Field(default=2e7, gt=0.0)
    # largest line integral of the training split maps to this attenuation
    peak_attenuation: float = Field(default=4.0, gt=0.0)
    before_interpolation: bool = True


class LossSettings(BaseModel):
    model_config = _FROZEN

    weights: LossWeights = Field(default_factory=LossWeights)
    discriminator: bool = True
    log_disc_loss: bool = False


class StageSchedule(BaseModel):
    model_config = _FROZEN

    epochs: int = Field(gt=0)
    lr_initial: float = Field(gt=0.0)
    lr_late: float = Field(gt=0.0)
    switch_epoch: int = Field(default=10, ge=0)
    batch_size: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _check_switch(self) -> "StageSchedule":
        if self.switch_epoch >= self.epochs:
            raise ValueError(f"switch epoch {self.switch_epoch} must be below the epoch count {self.epochs}")
        return self

    def lr(self, epoch: int) -> float:
        """Learning rate of a zero-based epoch."""
        return self.lr_initial if epoch < self.switch_epoch else self.lr_late


class Schedules(BaseModel):
    model_config = _FROZEN

    radon: StageSchedule = Field(default_factory=lambda: StageSchedule(epochs=20, lr_initial=3e-4, lr_late=3e-5))
    image: StageSchedule = Field(default_factory=lambda: StageSchedule(epochs=30, lr_initial=1e-4, lr_late=1e-5))
    end2end: StageSchedule = Field(default_factory=lambda: StageSchedule(epochs=30, lr_initial=1e-5, lr_late=1e-6))

    def for_stage(self, stage: Stage) -> StageSchedule:
        return getattr(self, stage)


class EvalSettings(BaseModel):
    model_config = _FROZEN

    record_timing: bool = True
    # square region (row, col, side) reported as extra "@roi" rows
    roi: Optional[List[int]] = None
    montage_samples: int = Field(default=4, ge=0)
    sweep_views: List[int] = Field(default_factory=lambda: [45, 20, 10])

    @model_validator(mode="after")
    def _check_roi(self) -> "EvalSettings":
        if self.roi is not None and (len(self.roi) != 3 or min(self.roi) < 0 or self.roi[2] == 0):
            raise ValueError("roi must be three non-negative integers row,col,side with side > 0")
        return self


class ExperimentConfig(BaseModel):
    model_config = _FROZEN

    seed: int = Field(default=0, ge=0, lt=2**63)
    precision: Literal["f32", "f64"] = "f32"
    fbp_window: Literal["ram-lak", "hann"] = "ram-lak"
    phantom: PhantomSettings = Field(default_factory=PhantomSettings)
    splits: SplitSettings = Field(default_factory=SplitSettings)
    views: ViewSettings = Field(default_factory=ViewSettings)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    sart: SartConfig = Field(default_factory=SartConfig)
    net: NetConfig = Field(default_factory=NetConfig)
    loss: LossSettings = Field(default_factory=LossSettings)
    ssim: SsimConfig = Field(default_factory=SsimConfig)
    schedules: Schedules = Field(default_factory=Schedules)
    eval: EvalSettings = Field(default_factory=EvalSettings)

    @model_validator(mode="after")
    def _check_shapes(self) -> "ExperimentConfig":
        multiple = self.net.size_multiple
        if self.phantom.size % multiple:
            raise ValueError(f"phantom size {self.phantom.size} is not a multiple of {multiple}")
        if self.views.padded % multiple:
            raise ValueError(f"padded view count {self.views.padded} is not a multiple of {multiple}")
        if self.eval.roi is not None:
            row, col, side = self.eval.roi
            if row + side > self.phantom.size or col + side > self.phantom.size:
                raise ValueError(f"roi {self.eval.roi} leaves the {self.phantom.size}x{self.phantom.size} image")
        return self

    @property
    def dtype(self) -> type[np.floating]:
        return np.float64 if self.precision == "f64" else np.float32

    def hash(self) -> str:
        return config_hash(self)

    def run_dir(self, runs_dir: str | os.PathLike[str] = "runs") -> Path:
        return Path(runs_dir) / self.hash()[:12]


def experiment_from_entries(
    entries: Mapping[str, Any],
    *,
    defaults: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Resolve flat dotted ``entries`` over the code defaults (or a nested ``defaults`` mapping)."""
    base = ExperimentConfig().model_dump(mode="json")
    if defaults:
        base = build_model(ExperimentConfig, base, flatten(defaults)).model_dump(mode="json")
    return build_model(ExperimentConfig, base, entries)


def load_experiment_config(
    path: str | os.PathLike[str] | None = None,
    *,
    global_cfg: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Code defaults, then the global YAML ``experiment`` section, then the RunConfig file, then ``overrides``."""
    entries: dict[str, Any] = {}
    if path is not None:
        cfg_path = Path(path)
        if not cfg_path.is_file():
            raise MissingArtifactError(f"run config {cfg_path} does not exist")
        entries.update(parse_run_config(cfg_path.read_text(encoding="utf-8")))
    if overrides:
        entries.update(overrides)
    section = (global_cfg or {}).get("experiment") or None
    if section is not None and not isinstance(section, Mapping):
        raise ConfigError("'experiment' section must be a mapping", key="experiment")
    return experiment_from_entries(entries, defaults=section)


def dump_experiment_config(cfg: ExperimentConfig) -> str:
    return serialize_run_config(cfg)


__all__ = [
    "Stage",
    "STAGES",
    "PhantomSettings",
    "SplitSettings",
    "ViewSettings",
    "NoiseSettings",
    "LossSettings",
    "StageSchedule",
    "Schedules",
    "EvalSettings",
    "ExperimentConfig",
    "experiment_from_entries",
    "load_experiment_config",
    "dump_experiment_config",
]
