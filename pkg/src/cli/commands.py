"""``sparse-ct`` command line: simulate, reconstruct, train, eval, gradcheck, describe, ablate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console

from src.core.errors import (
    ConfigError,
    IncompatibleCheckpointError,
    MissingArtifactError,
    SparseCTError,
    UsageError,
)
from src.core.logger import setup_logging
from src.core.pgm import load_image, save_image
from src.core.phantom import inscribed_mask
from src.core.tnsr import load_sinogram
from src.core.types import Image, Sinogram, uniform_angles
from src.cagan.complexity import count_params, describe
from src.objectives.metrics import masked, psnr, ssim_value, write_metrics_csv
from src.sino.pipeline import interpolate_views, pad_views
from src.tomo.fbp import fbp
from src.tomo.geometry import SartConfig
from src.tomo.sart import sart_tv
from src.trainer.ablation import DEFAULT_VARIANTS, ablation_suite, ablation_table
from src.trainer.config import STAGES, ExperimentConfig, dump_experiment_config, load_experiment_config
from src.trainer.dataset import build_dataset, ensure_dataset, load_dataset
from src.trainer.evaluate import CLASSICAL, PIPELINES, evaluate_pipelines, required_stages, evaluate_sparsity_sweep, summary_table
from src.trainer.gradcheck_suite import report_table, run_suite
from src.trainer.train import load_trained, train_all, train_stage
from src.utils.config_loader import ConfigLoader


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_INCOMPATIBLE = 4

RECONSTRUCT_METHODS = ("fbp", "sart-tv", "interp-fbp", "cagan")

console = Console()


# -- shared plumbing ---------------------------------------------------------------------

class Context:
    """Global YAML settings plus the resolved experiment configuration of one invocation."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.settings = ConfigLoader.load_global_config(args.global_config)
        runtime = self.settings.get("runtime", {})
        threads = runtime.get("threads")
        try:
            self.workers: Optional[int] = int(threads) if threads not in (None, "") else None
        except ValueError as exc:
            raise ConfigError(f"runtime.threads must be an integer, got {threads!r}", key="runtime.threads") from exc
        self.runs_dir = Path(args.runs_dir or runtime.get("runs_dir", "runs"))
        self._cfg: Optional[ExperimentConfig] = None

    @property
    def cfg(self) -> ExperimentConfig:
        if self._cfg is None:
            overrides: Dict[str, Any] = {}
            if getattr(self.args, "seed", None) is not None:
                overrides["seed"] = self.args.seed
            self._cfg = load_experiment_config(
                getattr(self.args, "config", None), global_cfg=self.settings, overrides=overrides
            )
        return self._cfg

    @property
    def run_dir(self) -> Path:
        return self.cfg.run_dir(self.runs_dir)

    def data_dir(self) -> Path:
        data = getattr(self.args, "data", None)
        return Path(data) if data else self.run_dir / "data"


def _comma_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _view_counts(text: str) -> List[int]:
    try:
        return [int(v) for v in _comma_list(text)]
    except ValueError as exc:
        raise UsageError(f"view counts must be integers, got {text!r}") from exc


# -- commands -----------------------------------------------------------------------------

def cmd_simulate(ctx: Context) -> int:
    cfg = ctx.cfg
    out = Path(ctx.args.out) if ctx.args.out else ctx.data_dir()
    dataset = build_dataset(cfg, out, workers=ctx.workers)
    (out / "run.cfg").write_text(dump_experiment_config(cfg), encoding="utf-8")
    print(f"{out / 'manifest.json'} samples={len(dataset)} config_hash={cfg.hash()}")
    return EXIT_OK


def _reconstruct_cagan(ctx: Context, sino: Sinogram) -> np.ndarray:
    cfg = ctx.cfg
    run_dir = Path(ctx.args.ckpt) if ctx.args.ckpt else ctx.run_dir
    if not run_dir.is_dir():
        raise MissingArtifactError(f"checkpoint directory {run_dir} does not exist")
    full = interpolate_views(sino, uniform_angles(cfg.views.full))
    padded = pad_views(full, cfg.views.padded).samples[np.newaxis, np.newaxis].astype(cfg.dtype)
    models = load_trained(cfg, run_dir, required_stages("dual", run_dir))
    return models.dual(padded)[0, 0].astype(np.float64)


def cmd_reconstruct(ctx: Context) -> int:
    args = ctx.args
    sino = load_sinogram(args.input)
    size = sino.detectors
    window = args.window
    if args.method == "fbp":
        pixels = fbp(sino, size, window).pixels
    elif args.method == "interp-fbp":
        views = args.full_views or ctx.cfg.views.full
        pixels = fbp(interpolate_views(sino, uniform_angles(views)), size, window).pixels
    elif args.method == "sart-tv":
        updates = {
            key: value
            for key, value in {
                "iters": args.sart_iters,
                "tv_w": args.tv_w,
                "tv_maxit": args.tv_maxit,
                "tv_eps": args.tv_eps,
                "relaxation": args.relaxation,
            }.items()
            if value is not None
        }
        sart_cfg = SartConfig.model_validate({**ctx.cfg.sart.model_dump(), **updates})
        pixels = sart_tv(sino, size, sart_cfg).pixels
    else:
        pixels = _reconstruct_cagan(ctx, sino)
    save_image(args.out, Image(pixels=pixels))
    if args.truth:
        truth = load_image(args.truth).pixels
        mask = inscribed_mask(size)
        data_range = float(truth.max() - truth.min()) or 1.0
        pred_m, truth_m = masked(pixels, mask), masked(truth, mask)
        ssim_cfg = ctx.cfg.ssim.model_copy(update={"data_range": data_range})
        print(f"method={args.method} psnr={psnr(pred_m, truth_m, data_range):.4f} ssim={ssim_value(pred_m, truth_m, ssim_cfg):.6f}")
    return EXIT_OK


def cmd_train(ctx: Context) -> int:
    cfg = ctx.cfg
    dataset = ensure_dataset(cfg, ctx.data_dir(), workers=ctx.workers)
    if ctx.args.stage == "all":
        path = train_all(dataset, ctx.run_dir, resume=ctx.args.resume)
    else:
        path = train_stage(ctx.args.stage, dataset, ctx.run_dir, resume=ctx.args.resume)
    print(path)
    return EXIT_OK


def cmd_eval(ctx: Context) -> int:
    cfg = ctx.cfg
    args = ctx.args
    dataset = load_dataset(args.testset or ctx.data_dir(), cfg, splits=(args.split,))
    out = Path(args.out) if args.out else ctx.run_dir / "metrics.csv"
    if args.sweep is not None:
        views = _view_counts(args.sweep) or list(cfg.eval.sweep_views)
        pipelines = [p for p in args.pipeline if p in CLASSICAL] or list(CLASSICAL)
        records = evaluate_sparsity_sweep(dataset, views, pipelines, split=args.split, workers=ctx.workers)
        write_metrics_csv(out, records)
    else:
        records = evaluate_pipelines(args.pipeline, dataset, out, run_dir=ctx.run_dir, split=args.split, workers=ctx.workers)
    console.print(summary_table(records, title=str(out)))
    return EXIT_OK


def cmd_gradcheck(ctx: Context) -> int:
    names = None if ctx.args.all or not ctx.args.case else ctx.args.case
    reports = run_suite(names, seed=ctx.args.seed or 0)
    console.print(report_table(reports))
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"gradient check failures: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_describe(ctx: Context) -> int:
    cfg = ctx.cfg
    for height, width in ((cfg.views.padded, cfg.phantom.size), (cfg.phantom.size, cfg.phantom.size)):
        for table in describe(cfg.net, height, width):
            console.print(table)
    print(f"generator params={count_params(cfg.net)} discriminator params={count_params(cfg.net, 'discriminator')}")
    return EXIT_OK


def cmd_ablate(ctx: Context) -> int:
    cfg = ctx.cfg
    dataset = ensure_dataset(cfg, ctx.data_dir(), workers=ctx.workers)
    variants = DEFAULT_VARIANTS
    if ctx.args.variants:
        wanted = _comma_list(ctx.args.variants)
        known = {v.name: v for v in DEFAULT_VARIANTS}
        missing = [w for w in wanted if w not in known]
        if missing:
            raise UsageError(f"unknown ablation variants: {', '.join(missing)}")
        variants = tuple(known[w] for w in wanted)
    out = Path(ctx.args.out) if ctx.args.out else ctx.run_dir / "ablation"
    rows = ablation_suite(dataset, out, variants)
    console.print(ablation_table(rows, reference=variants[0].name))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, *, config: bool = True) -> None:
    if config:
        p.add_argument("--config", type=Path, default=None, help="RunConfig file (key = value lines)")
    p.add_argument("--seed", type=int, default=None, help="Override the experiment seed")
    p.add_argument("--runs-dir", dest="runs_dir", type=Path, default=None, help="Root of run directories")
    p.add_argument("--global-config", dest="global_config", type=Path, default=None, help="Global YAML settings")
    p.add_argument("--log-level", dest="log_level", default=None, help="Console log level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-ct", description="Sparse-view CT simulation, reconstruction and dual-domain restoration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Build the phantom/sinogram dataset")
    _common(p)
    p.add_argument("--out", type=Path, default=None, help="Dataset directory (default: <run>/data)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("reconstruct", help="Reconstruct one sinogram container")
    _common(p)
    p.add_argument("--method", choices=RECONSTRUCT_METHODS, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True, help="Sinogram TNSR container")
    p.add_argument("--out", type=Path, required=True, help="Output PGM")
    p.add_argument("--ckpt", type=Path, default=None, help="Run directory holding checkpoints (cagan)")
    p.add_argument("--truth", type=Path, default=None, help="Ground-truth PGM; prints PSNR/SSIM")
    p.add_argument("--window", choices=("ram-lak", "hann"), default="ram-lak")
    p.add_argument("--full-views", dest="full_views", type=int, default=None, help="Interpolation target view count")
    p.add_argument("--sart-iters", dest="sart_iters", type=int, default=None)
    p.add_argument("--tv-w", dest="tv_w", type=float, default=None)
    p.add_argument("--tv-maxit", dest="tv_maxit", type=int, default=None)
    p.add_argument("--tv-eps", dest="tv_eps", type=float, default=None)
    p.add_argument("--relaxation", type=float, default=None)
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("train", help="Train one stage (or all three)")
    _common(p)
    p.add_argument("--stage", choices=(*STAGES, "all"), required=True)
    p.add_argument("--data", type=Path, default=None, help="Dataset directory (built when missing)")
    p.add_argument("--resume", action="store_true", help="Continue from the stage checkpoint")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Score reconstruction pipelines on the test split")
    _common(p)
    p.add_argument("--pipeline", type=_comma_list, default=list(CLASSICAL), help=f"Comma list from {', '.join(PIPELINES)}")
    p.add_argument("--testset", type=Path, default=None, help="Dataset directory (default: <run>/data)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", type=Path, default=None, help="Metrics CSV (default: <run>/metrics.csv)")
    p.add_argument("--sweep", nargs="?", const="", default=None, help="Classical sparsity sweep; optional comma list of view counts (default: eval.sweep_views)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient checks")
    _common(p, config=False)
    p.add_argument("--all", action="store_true", help="Run every case")
    p.add_argument("--case", action="append", default=None, help="Run one named case (repeatable)")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("describe", help="Layer, parameter and MAC tables of the networks")
    _common(p)
    p.set_defaults(handler=cmd_describe)

    p = sub.add_parser("ablate", help="Train the Radon stage for each ablation variant")
    _common(p)
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--variants", default=None, help="Comma list of variant names")
    p.set_defaults(handler=cmd_ablate)
    return parser


def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


_EXIT_CODES: tuple[tuple[type[BaseException], int], ...] = (
    (ConfigError, EXIT_USAGE),
    (UsageError, EXIT_USAGE),
    (MissingArtifactError, EXIT_MISSING),
    (IncompatibleCheckpointError, EXIT_INCOMPATIBLE),
    (SparseCTError, EXIT_FAILURE),
)


def exit_code(exc: BaseException) -> int:
    for kind, code in _EXIT_CODES:
        if isinstance(exc, kind):
            return code
    raise exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        ctx = Context(args)
        logging_cfg = ctx.settings.get("logging", {})
        setup_logging(logging_cfg.get("dir", "logs"), level=args.log_level or logging_cfg.get("level"))
        handler: Callable[[Context], int] = args.handler
        return handler(ctx)
    except SparseCTError as exc:
        code = exit_code(exc)
        key = getattr(exc, "key", None)
        suffix = f" [key: {key}]" if key and key not in str(exc) else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        logger.debug("command failed", exc_info=True)
        return code


__all__ = ["main", "build_parser", "exit_code", "cmd_simulate", "cmd_reconstruct", "cmd_train", "cmd_eval", "cmd_gradcheck", "cmd_describe", "cmd_ablate"]
