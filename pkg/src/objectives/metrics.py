from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from src.core.errors import FormatError, ShapeError
from src.autodiff.tensor import Tensor, no_grad
from src.objectives.losses import SsimConfig, ssim


def psnr(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """10 log10(range^2 / MSE) in dB; identical inputs give +inf."""
    a, b = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def ssim_value(x: np.ndarray, y: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """SSIM of two 2-D images (or N,C,H,W stacks) as a plain float, computed in float64."""
    a, b = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[None, None], b[None, None]
    with no_grad():
        return ssim(Tensor(a), Tensor(b), cfg).item()


@dataclass(frozen=True)
class MetricsRecord:
    sample_id: str
    stage: str
    # measured projection angles the reconstruction started from
    views: int
    psnr: float
    ssim: float
    seconds: float
    data_range: float


CSV_COLUMNS = [f.name for f in fields(MetricsRecord)]


def _fmt(value: object) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6f}"
    return str(value)


def write_metrics_csv(path: str | os.PathLike[str], records: Iterable[MetricsRecord]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(v) for v in asdict(rec).values()])


def read_metrics_csv(path: str | os.PathLike[str]) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise FormatError(f"metrics CSV columns {reader.fieldnames} != {CSV_COLUMNS}")
        out = []
        for row in reader:
            out.append(
                MetricsRecord(
                    sample_id=row["sample_id"],
                    stage=row["stage"],
                    views=int(row["views"]),
                    psnr=float(row["psnr"]),
                    ssim=float(row["ssim"]),
                    seconds=float(row["seconds"]),
                    data_range=float(row["data_range"]),
                )
            )
        return out


def summarize(records: Iterable[MetricsRecord]) -> dict[str, tuple[float, float]]:
    """Mean PSNR and SSIM per stage, in first-seen stage order."""
    grouped: dict[str, list[MetricsRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.stage, []).append(rec)
    return {
        stage: (float(np.mean([r.psnr for r in recs])), float(np.mean([r.ssim for r in recs])))
        for stage, recs in grouped.items()
    }


def masked(image: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return image if mask is None else np.where(mask, image, 0.0)


__all__ = [
    "psnr",
    "ssim_value",
    "MetricsRecord",
    "CSV_COLUMNS",
    "write_metrics_csv",
    "read_metrics_csv",
    "summarize",
    "masked",
]
