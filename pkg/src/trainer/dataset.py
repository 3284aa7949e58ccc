"""Synthetic dataset: phantoms, full-view sinograms and their degraded sparse-view counterparts."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from src.core.errors import FormatError, IncompatibleCheckpointError, MissingArtifactError
from src.core.phantom import make_phantom
from src.core.rng import derive_seed
from src.core.schema_validator import SchemaValidator
from src.core.tnsr import load_tensor, save_tensor, sinogram_entries, sinogram_from_entries
from src.core.types import Image, PhantomSpec, Sinogram, uniform_angles
from src.sino.pipeline import NoiseSpec, interpolate_views, pad_views, poisson_noise, sparse_sample
from src.tomo.projector import radon_forward
from src.trainer.config import ExperimentConfig
from src.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    split: str
    phantom: np.ndarray
    r_gt: Sinogram  # full views, padded
    r_sv: Sinogram  # sparse views after noise
    r_fv: Sinogram  # interpolated to full views, padded

    def entries(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("phantom", self.phantom),
            *sinogram_entries(self.r_gt, "r_gt"),
            *sinogram_entries(self.r_sv, "r_sv"),
            *sinogram_entries(self.r_fv, "r_fv"),
        ]

    @classmethod
    def from_entries(cls, sample_id: str, split: str, entries: Dict[str, np.ndarray]) -> "Sample":
        if "phantom" not in entries:
            raise FormatError(f"sample {sample_id} has no phantom entry")
        return cls(
            sample_id=sample_id,
            split=split,
            phantom=entries["phantom"],
            r_gt=sinogram_from_entries(entries, "r_gt"),
            r_sv=sinogram_from_entries(entries, "r_sv"),
            r_fv=sinogram_from_entries(entries, "r_fv"),
        )


@dataclass
class Dataset:
    config: ExperimentConfig
    mu_scale: float
    splits: Dict[str, List[Sample]]
    root: Optional[Path] = None

    def __getitem__(self, split: str) -> List[Sample]:
        return self.splits[split]

    def __len__(self) -> int:
        return sum(len(v) for v in self.splits.values())

    def __iter__(self) -> Iterator[Sample]:
        for split in SPLITS:
            yield from self.splits.get(split, [])


def sample_ids(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    return [
        (split, f"{split}-{index:04d}")
        for split, count in cfg.splits.sizes().items()
        for index in range(count)
    ]


def _ground_truth(cfg: ExperimentConfig, sample_id: str) -> tuple[np.ndarray, Sinogram]:
    spec = PhantomSpec(
        kind=cfg.phantom.kind,
        size=cfg.phantom.size,
        ellipse_count=cfg.phantom.ellipse_count,
        seed=derive_seed(cfg.seed, "phantom", sample_id),
    )
    phantom = make_phantom(spec)
    return phantom.pixels, radon_forward(phantom, uniform_angles(cfg.views.full))


def degrade(cfg: ExperimentConfig, r_gt: Sinogram, mu_scale: float, sample_id: str, sparse_views: Optional[int] = None) -> tuple[Sinogram, Sinogram]:
    """Sparse-sample, add photon noise and re-interpolate an unpadded full-view sinogram.

    Returns (sparse, interpolated-and-padded).
    """
    views = sparse_views or cfg.views.sparse
    noise = NoiseSpec(
        incident_photons=cfg.noise.incident_photons,
        mu_scale=mu_scale,
        seed=derive_seed(cfg.seed, "noise", sample_id, views),
    )
    sparse = sparse_sample(r_gt, views)
    if cfg.noise.enabled and cfg.noise.before_interpolation:
        sparse = poisson_noise(sparse, noise)
    filled = interpolate_views(sparse, r_gt.angles)
    if cfg.noise.enabled and not cfg.noise.before_interpolation:
        filled = poisson_noise(filled, noise)
    return sparse, pad_views(filled, cfg.views.padded)


def build_dataset(cfg: ExperimentConfig, out_dir: str | os.PathLike[str] | None = None, *, workers: Optional[int] = None) -> Dataset:
    """Generate every split; with ``out_dir`` also write per-sample containers and the manifest."""
    ids = sample_ids(cfg)
    truths = ordered_map(lambda item: _ground_truth(cfg, item[1]), ids, workers=workers)

    train_peak = max(
        (float(r_gt.samples.max()) for (split, _), (_, r_gt) in zip(ids, truths) if split == "train"),
        default=0.0,
    )
    mu_scale = cfg.noise.peak_attenuation / train_peak if train_peak > 0.0 else 1.0

    def finish(index: int) -> Sample:
        split, sample_id = ids[index]
        phantom, r_gt = truths[index]
        r_sv, r_fv = degrade(cfg, r_gt, mu_scale, sample_id)
        return Sample(sample_id, split, phantom, pad_views(r_gt, cfg.views.padded), r_sv, r_fv)

    samples = ordered_map(finish, range(len(ids)), workers=workers)
    dataset = Dataset(config=cfg, mu_scale=mu_scale, splits={s: [x for x in samples if x.split == s] for s in SPLITS})
    logger.info(
        "built dataset train=%d val=%d test=%d mu_scale=%.6g",
        len(dataset["train"]), len(dataset["val"]), len(dataset["test"]), mu_scale,
    )
    if out_dir is not None:
        write_dataset(dataset, out_dir)
    return dataset


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(dataset: Dataset, out_dir: str | os.PathLike[str]) -> Path:
    root = Path(out_dir)
    (root / "samples").mkdir(parents=True, exist_ok=True)
    listing = []
    for sample in dataset:
        rel = f"{sample.sample_id}.tnsr"
        path = root / "samples" / rel
        save_tensor(path, sample.entries())
        listing.append({"split": sample.split, "sample_id": sample.sample_id, "file": rel, "sha256": _sha256(path)})
    cfg = dataset.config
    manifest = {
        "format_version": MANIFEST_VERSION,
        "config_hash": cfg.hash(),
        "mu_scale": dataset.mu_scale,
        "views": cfg.views.full,
        "padded_views": cfg.views.padded,
        "config": cfg.model_dump(mode="json"),
        "samples": listing,
    }
    SchemaValidator.bundled("manifest").require(manifest, "dataset manifest")
    manifest_path = root / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    dataset.root = root
    logger.info("wrote %d samples to %s", len(listing), root)
    return manifest_path


def read_manifest(root: str | os.PathLike[str]) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise MissingArtifactError(f"no dataset manifest at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    SchemaValidator.bundled("manifest").require(manifest, str(path))
    return manifest


def load_dataset(
    root: str | os.PathLike[str],
    cfg: Optional[ExperimentConfig] = None,
    *,
    splits: Sequence[str] = SPLITS,
) -> Dataset:
    """Read a written dataset back, verifying checksums and (optionally) the config hash."""
    root = Path(root)
    manifest = read_manifest(root)
    if cfg is None:
        cfg = ExperimentConfig.model_validate(manifest["config"])
    if manifest["config_hash"] != cfg.hash():
        raise IncompatibleCheckpointError(
            f"dataset {root} was built for config {manifest['config_hash'][:12]}, not {cfg.hash()[:12]}"
        )
    loaded: Dict[str, List[Sample]] = {s: [] for s in SPLITS}
    for row in manifest["samples"]:
        if row["split"] not in splits:
            continue
        path = root / "samples" / row["file"]
        if not path.is_file():
            raise MissingArtifactError(f"dataset sample {path} is missing")
        if _sha256(path) != row["sha256"]:
            raise FormatError(f"checksum mismatch for {path}")
        loaded[row["split"]].append(Sample.from_entries(row["sample_id"], row["split"], load_tensor(path)))
    return Dataset(config=cfg, mu_scale=float(manifest["mu_scale"]), splits=loaded, root=root)


def ensure_dataset(cfg: ExperimentConfig, root: str | os.PathLike[str], *, workers: Optional[int] = None) -> Dataset:
    """Load the dataset under ``root`` or build and write it when no manifest exists yet."""
    if (Path(root) / MANIFEST_NAME).is_file():
        return load_dataset(root, cfg)
    return build_dataset(cfg, root, workers=workers)


def stack(samples: Sequence[Sample], field: str, dtype: np.dtype | type = np.float64) -> np.ndarray:
    """(N, 1, H, W) batch of one sample field (``phantom`` or a sinogram name)."""
    arrays = [getattr(s, field) for s in samples]
    arrays = [a.samples if isinstance(a, Sinogram) else a for a in arrays]
    return np.stack(arrays)[:, np.newaxis].astype(dtype)


def phantom_image(sample: Sample) -> Image:
    return Image(pixels=sample.phantom)


__all__ = [
    "Sample",
    "Dataset",
    "sample_ids",
    "degrade",
    "build_dataset",
    "write_dataset",
    "read_manifest",
    "load_dataset",
    "ensure_dataset",
    "stack",
    "phantom_image",
    "MANIFEST_NAME",
]
