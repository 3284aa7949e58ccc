from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from src.core.errors import FormatError, IncompatibleCheckpointError, MissingArtifactError
from src.core.schema_validator import SchemaValidator
from src.core.tnsr import encode_tensors, load_tensor
from src.autodiff.optim import AdamState
from src.autodiff.params import ModelParams
from src.trainer.config import ExperimentConfig
from src.trainer.normalization import DomainNorm


logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"
DIAGNOSTIC_SUFFIX = "-diverged"


@dataclass(frozen=True)
class CheckpointInfo:
    stage: str
    epoch: int
    config_hash: str
    diverged: bool
    models: tuple[str, ...]


def checkpoint_paths(run_dir: str | os.PathLike[str], stage: str, *, diagnostic: bool = False) -> tuple[Path, Path]:
    stem = f"{stage}{DIAGNOSTIC_SUFFIX}" if diagnostic else stage
    base = Path(run_dir) / CHECKPOINT_DIR
    return base / f"{stem}.tnsr", base / f"{stem}.json"


def checkpoint_entries(
    models: Iterable[ModelParams],
    optimizers: Mapping[str, AdamState],
    norms: Mapping[str, DomainNorm],
) -> list[tuple[str, np.ndarray]]:
    """Copies of every parameter, buffer, optimizer moment and normalization map."""
    entries: list[tuple[str, np.ndarray]] = []
    for model in models:
        entries += [(k, np.array(v, copy=True)) for k, v in model.state_entries()]
    for name, state in optimizers.items():
        entries += [(k, np.array(v, copy=True)) for k, v in state.state_entries(f"adam.{name}")]
    for domain, norm in norms.items():
        entries.append(norm.entry(domain))
    return entries


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(
    run_dir: str | os.PathLike[str],
    stage: str,
    epoch: int,
    cfg: ExperimentConfig,
    entries: Sequence[tuple[str, np.ndarray]],
    models: Sequence[str],
    *,
    diverged: bool = False,
) -> Path:
    """Write ``<stage>.tnsr`` and its ``<stage>.json`` sidecar; ``epoch`` counts finished epochs."""
    tnsr_path, sidecar_path = checkpoint_paths(run_dir, stage, diagnostic=diverged)
    tnsr_path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = {
        "stage": stage,
        "epoch": int(epoch),
        "config_hash": cfg.hash(),
        "diverged": diverged,
        "models": list(models),
    }
    SchemaValidator.bundled("checkpoint").require(sidecar, "checkpoint sidecar")
    _atomic_write(tnsr_path, encode_tensors(entries))
    _atomic_write(sidecar_path, (json.dumps(sidecar, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    logger.debug("checkpoint %s epoch=%d diverged=%s", tnsr_path, epoch, diverged)
    return tnsr_path


def read_sidecar(run_dir: str | os.PathLike[str], stage: str, cfg: Optional[ExperimentConfig] = None) -> CheckpointInfo:
    tnsr_path, sidecar_path = checkpoint_paths(run_dir, stage)
    if not sidecar_path.is_file() or not tnsr_path.is_file():
        raise MissingArtifactError(f"no {stage} checkpoint under {Path(run_dir) / CHECKPOINT_DIR}")
    try:
        raw = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar_path}: {exc}") from exc
    SchemaValidator.bundled("checkpoint").require(raw, str(sidecar_path))
    info = CheckpointInfo(
        stage=raw["stage"],
        epoch=raw["epoch"],
        config_hash=raw["config_hash"],
        diverged=raw["diverged"],
        models=tuple(raw.get("models", ())),
    )
    if cfg is not None and info.config_hash != cfg.hash():
        raise IncompatibleCheckpointError(
            f"{stage} checkpoint was written for config {info.config_hash[:12]}, current config is {cfg.hash()[:12]}"
        )
    return info


def has_checkpoint(run_dir: str | os.PathLike[str], stage: str) -> bool:
    return all(p.is_file() for p in checkpoint_paths(run_dir, stage))


def load_checkpoint(
    run_dir: str | os.PathLike[str],
    stage: str,
    cfg: ExperimentConfig,
    models: Sequence[ModelParams],
    optimizers: Optional[Mapping[str, AdamState]] = None,
) -> tuple[CheckpointInfo, dict[str, DomainNorm]]:
    """Restore ``models`` (and optimizer state) in place; returns the sidecar and stored normalizations."""
    info = read_sidecar(run_dir, stage, cfg)
    entries = load_tensor(checkpoint_paths(run_dir, stage)[0])
    for model in models:
        if model.name not in info.models:
            raise MissingArtifactError(f"{stage} checkpoint holds no model {model.name!r} (has {', '.join(info.models)})")
        model.load_entries(entries)
    for name, state in (optimizers or {}).items():
        state.load_entries(f"adam.{name}", entries)
    norms = {domain: DomainNorm.from_entries(entries, domain) for domain in ("radon", "image")}
    logger.info("loaded %s checkpoint (epoch %d) from %s", stage, info.epoch, run_dir)
    return info, norms


__all__ = [
    "CheckpointInfo",
    "checkpoint_paths",
    "checkpoint_entries",
    "save_checkpoint",
    "read_sidecar",
    "has_checkpoint",
    "load_checkpoint",
]
