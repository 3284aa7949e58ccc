from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

from src.trainer.config import ExperimentConfig, experiment_from_entries
from src.trainer.dataset import Dataset, build_dataset


TOY_ENTRIES: Dict[str, Any] = {
    "seed": 3,
    "precision": "f64",
    "phantom.size": 16,
    "phantom.ellipse_count": 3,
    "splits.train": 4,
    "splits.val": 2,
    "splits.test": 2,
    "views.full": 16,
    "views.sparse": 8,
    "views.padded": 16,
    "net.stage_channels": [4, 8, 8, 8],
    "net.bottleneck_channels": 16,
    "net.block.gn_groups": 2,
    "net.block.shuffle_groups": 2,
    "net.block.reduction": 2,
    "sart.iters": 3,
    "sart.tv_maxit": 5,
    "ssim.window": 5,
    "schedules.radon.epochs": 2,
    "schedules.radon.switch_epoch": 1,
    "schedules.image.epochs": 2,
    "schedules.image.switch_epoch": 1,
    "schedules.end2end.epochs": 2,
    "schedules.end2end.switch_epoch": 1,
    "eval.montage_samples": 2,
    "eval.sweep_views": [8, 4],
}


@pytest.fixture
def toy_entries() -> Dict[str, Any]:
    return dict(TOY_ENTRIES)


@pytest.fixture
def toy_config() -> ExperimentConfig:
    return experiment_from_entries(TOY_ENTRIES)


@pytest.fixture(scope="session")
def toy_dataset() -> Dataset:
    """Toy dataset built once; tests must not mutate it."""
    return build_dataset(experiment_from_entries(TOY_ENTRIES), workers=1)


@pytest.fixture
def toy_run_config(tmp_path: Path) -> Path:
    """The toy experiment as a RunConfig file on disk."""
    lines = []
    for key, value in TOY_ENTRIES.items():
        text = ", ".join(str(v) for v in value) if isinstance(value, list) else str(value)
        lines.append(f"{key} = {text}")
    path = tmp_path / "toy.cfg"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def disk(size: int, radius: float, value: float = 1.0) -> np.ndarray:
    """Centered disk with exact pixel membership by center distance."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    return np.where(coords[np.newaxis, :] ** 2 + coords[:, np.newaxis] ** 2 <= radius**2, value, 0.0)
