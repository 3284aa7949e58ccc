"""Finite-difference checks of every operator, block, network and loss on miniature float64 instances."""

from __future__ import annotations

import logging
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
from rich.table import Table

from src.core.errors import UsageError
from src.core.rng import Rng, derive_seed
from src.core.types import uniform_angles
from src.autodiff import ops
from src.autodiff.conv import conv2d, conv_transpose2d, maxpool2d
from src.autodiff.gradcheck import GradCheckReport, check_leaves, grad_check
from src.autodiff.norm import batch_norm, group_norm
from src.autodiff.params import ModelParams
from src.autodiff.tensor import Tensor, default_dtype
from src.cagan import blocks
from src.cagan.config import BlockConfig, NetConfig
from src.cagan.discriminator import discriminator_forward, init_discriminator
from src.cagan.generator import generator_forward, init_generator
from src.cagan.layers import LayerSpec, init_params
from src.objectives import losses
from src.tomo.fbp import FbpOperator
from src.tomo.geometry import Geometry


logger = logging.getLogger(__name__)

TOY_BLOCK = BlockConfig(gn_groups=2, shuffle_groups=2, reduction=2)
TOY_NET = NetConfig(stage_channels=[4, 8, 8, 8], bottleneck_channels=16, block=TOY_BLOCK)
NETWORK_ELEMENTS = 30


class _Inputs:
    """Seeded float64 draws for one case."""

    def __init__(self, name: str, seed: int) -> None:
        self.gen = Rng(derive_seed(seed, "gradcheck", name)).numpy_generator()

    def normal(self, *shape: int) -> np.ndarray:
        return self.gen.standard_normal(shape)

    def away_from_zero(self, *shape: int) -> np.ndarray:
        """Values in +-[0.5, 1.5]: keeps |x| and ReLU clear of their kink."""
        return self.gen.choice([-1.0, 1.0], size=shape) * self.gen.uniform(0.5, 1.5, size=shape)

    def uniform(self, low: float, high: float, *shape: int) -> np.ndarray:
        return self.gen.uniform(low, high, size=shape)


def _block_case(
    name: str,
    plan: List[LayerSpec],
    prefix: str,
    forward: Callable[[Tensor, object], Tensor],
    x_shape: tuple[int, ...],
    seed: int,
) -> GradCheckReport:
    with default_dtype(np.float64):
        params = init_params("blk", plan, Rng(derive_seed(seed, "init", name)))
    x = Tensor(_Inputs(name, seed).normal(*x_shape), requires_grad=True)
    scope = params.scope(prefix)
    leaves = [x, *(t for _, t in params)]
    return check_leaves(lambda: forward(x, scope), leaves, name=name, seed=seed)


def _network_case(name: str, params: ModelParams, forward: Callable[[Tensor], Tensor], x: Tensor, seed: int) -> GradCheckReport:
    leaves = [x, *(t for _, t in params)]
    return check_leaves(lambda: forward(x), leaves, name=name, seed=seed, max_elements=NETWORK_ELEMENTS)


def _op_cases(seed: int) -> Dict[str, Callable[[], GradCheckReport]]:
    def case(name: str, fn: Callable[..., Tensor], *make: Callable[[_Inputs], np.ndarray]) -> tuple[str, Callable[[], GradCheckReport]]:
        def run() -> GradCheckReport:
            draw = _Inputs(name, seed)
            return grad_check(fn, [m(draw) for m in make], name=name, seed=seed)

        return name, run

    def n(*shape: int) -> Callable[[_Inputs], np.ndarray]:
        return lambda d: d.normal(*shape)

    def away(*shape: int) -> Callable[[_Inputs], np.ndarray]:
        return lambda d: d.away_from_zero(*shape)

    def pos(*shape: int) -> Callable[[_Inputs], np.ndarray]:
        return lambda d: d.uniform(0.5, 2.0, *shape)

    def unit(*shape: int) -> Callable[[_Inputs], np.ndarray]:
        return lambda d: d.uniform(0.1, 0.9, *shape)

    matrix = _Inputs("linear_op.matrix", seed).normal(5, 4)
    fbp_op = FbpOperator(Geometry.create(16, uniform_angles(12)))
    img4 = (2, 4, 6, 6)

    def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        return batch_norm(x, gamma, beta, np.zeros(4), np.ones(4), training=True)

    def batch_norm_eval(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        return batch_norm(x, gamma, beta, np.full(4, 0.1), np.full(4, 1.3), training=False)

    return dict(
        [
            case("add", ops.add, n(3, 4), n(3, 4)),
            case("sub", ops.sub, n(3, 4), n(3, 4)),
            case("mul", ops.mul, n(3, 4), n(3, 4)),
            case("div", ops.div, n(3, 4), pos(3, 4)),
            case("neg", ops.neg, n(3, 4)),
            case("scalar_mul", lambda a: ops.scalar_mul(a, -1.7), n(3, 4)),
            case("add_scalar", lambda a: ops.add_scalar(a, 0.3), n(3, 4)),
            case("square", ops.square, n(3, 4)),
            case("sqrt", ops.sqrt, pos(3, 4)),
            case("log", ops.log, pos(3, 4)),
            case("abs", ops.abs_, away(3, 4)),
            case("relu", ops.relu, away(3, 4)),
            case("sigmoid", ops.sigmoid, n(3, 4)),
            case("sum", ops.sum_, n(3, 4)),
            case("mean", ops.mean, n(3, 4)),
            case("abs_sum", ops.abs_sum, away(3, 4)),
            case("reshape", lambda a: ops.reshape(a, (4, 3)), n(3, 4)),
            case("concat", lambda a, b: ops.concat([a, b], axis=1), n(2, 3, 2, 2), n(2, 1, 2, 2)),
            case("split", lambda a: ops.concat(ops.split(a, [1, 3], axis=1)[::-1], axis=1), n(2, 4, 2, 2)),
            case("channel_split", lambda a: ops.concat(ops.channel_split(a)[::-1], axis=1), n(2, 4, 2, 2)),
            case("slice_axis", lambda a: ops.slice_axis(a, 2, 1, 3), n(2, 2, 4, 3)),
            case("channel_shuffle", lambda a: ops.channel_shuffle(a, 2), n(2, 6, 2, 2)),
            case("swap_hw", ops.swap_hw, n(2, 2, 3, 4)),
            case("pool_h", lambda a: ops.pool_axis(a, "H"), n(2, 2, 3, 4)),
            case("pool_w", lambda a: ops.pool_axis(a, "W"), n(2, 2, 3, 4)),
            case("global_avg_pool", ops.global_avg_pool, n(2, 3, 3, 4)),
            case("coord_gate", ops.coord_gate, n(2, 2, 3, 4), unit(2, 2, 3, 1), unit(2, 2, 1, 4)),
            case("channel_gate", ops.channel_gate, n(2, 3, 2, 2), unit(2, 3, 1, 1)),
            case("linear_op", lambda a: ops.linear_op(a, lambda v: matrix @ v, lambda g: matrix.T @ g), n(4)),
            case("fbp_linear_op", lambda a: ops.linear_op(a, fbp_op.forward, fbp_op.adjoint, name="fbp"), n(12, 16)),
            case("conv2d", lambda x, w, b: conv2d(x, w, b, padding=1), n(2, 2, 5, 5), n(3, 2, 3, 3), n(3)),
            case("conv2d_stride2", lambda x, w: conv2d(x, w, stride=2, padding=1), n(1, 2, 6, 6), n(2, 2, 3, 3)),
            case("conv2d_depthwise", lambda x, w: conv2d(x, w, padding=1, groups=4), n(1, 4, 4, 4), n(4, 1, 3, 3)),
            case("conv_transpose2d", lambda x, w, b: conv_transpose2d(x, w, b), n(2, 3, 3, 3), n(3, 2, 2, 2), n(2)),
            case("maxpool2d", maxpool2d, n(2, 2, 4, 4)),
            case("group_norm", lambda x, g, b: group_norm(x, 2, g, b), n(*img4), pos(4), n(4)),
            case("batch_norm_train", batch_norm_train, n(*img4), pos(4), n(4)),
            case("batch_norm_eval", batch_norm_eval, n(*img4), pos(4), n(4)),
        ]
    )


def _block_cases(seed: int) -> Dict[str, Callable[[], GradCheckReport]]:
    b = TOY_BLOCK
    inside = b.model_copy(update={"placement": "inside"})
    se = b.model_copy(update={"attention": "SE"})
    bn = b.model_copy(update={"norm": "BN"})
    x8 = (2, 8, 6, 6)
    return {
        "shuffle_block_s1": lambda: _block_case(
            "shuffle_block_s1", blocks.plan_shuffle_s1("b", 8, inside, 1), "b",
            lambda x, s: blocks.shuffle_block_s1(x, s, inside), x8, seed,
        ),
        "shuffle_block_s1_bn": lambda: _block_case(
            "shuffle_block_s1_bn", blocks.plan_shuffle_s1("b", 8, bn, 1), "b",
            lambda x, s: blocks.shuffle_block_s1(x, s, bn), x8, seed,
        ),
        "shuffle_block_s2": lambda: _block_case(
            "shuffle_block_s2", blocks.plan_two_branch("b", 4, 8, b, 2, stride=2), "b",
            lambda x, s: blocks.shuffle_block_s2(x, s, b, 8), (2, 4, 6, 6), seed,
        ),
        "reduce_block": lambda: _block_case(
            "reduce_block", blocks.plan_two_branch("b", 8, 4, b, 1, stride=1), "b",
            lambda x, s: blocks.reduce_block(x, s, b, 4), x8, seed,
        ),
        "ca_block": lambda: _block_case(
            "ca_block", blocks.plan_ca_block("b", 8, b, 1), "b",
            lambda x, s: blocks.ca_block(x, s, b), (2, 8, 5, 4), seed,
        ),
        "se_block": lambda: _block_case(
            "se_block", blocks.plan_se_block("b", 8, se, 1), "b",
            lambda x, s: blocks.se_block(x, s, se), x8, seed,
        ),
        "vanilla_block": lambda: _block_case(
            "vanilla_block", blocks.plan_vanilla("b", 4, 8, b, 1), "b",
            lambda x, s: blocks.vanilla_block(x, s, b, 8, stride=2), (2, 4, 6, 6), seed,
        ),
        "maxpool_down": lambda: _block_case(
            "maxpool_down", blocks.plan_maxpool_down("b", 4, 8, b, 2), "b",
            lambda x, s: blocks.maxpool_down(x, s, b, 8), (2, 4, 6, 6), seed,
        ),
    }


def _network_cases(seed: int) -> Dict[str, Callable[[], GradCheckReport]]:
    def generator() -> GradCheckReport:
        with default_dtype(np.float64):
            params = init_generator(TOY_NET, Rng(derive_seed(seed, "init", "generator")))
        x = Tensor(_Inputs("generator", seed).normal(1, 1, 16, 16), requires_grad=True)
        return _network_case("generator", params, lambda t: generator_forward(t, params, TOY_NET), x, seed)

    def discriminator() -> GradCheckReport:
        with default_dtype(np.float64):
            params = init_discriminator(TOY_NET, Rng(derive_seed(seed, "init", "discriminator")))
        x = Tensor(_Inputs("discriminator", seed).normal(2, 1, 16, 16), requires_grad=True)
        return _network_case("discriminator", params, lambda t: discriminator_forward(t, params, TOY_NET), x, seed)

    return {"generator": generator, "discriminator": discriminator}


def _loss_cases(seed: int) -> Dict[str, Callable[[], GradCheckReport]]:
    ssim_cfg = losses.SsimConfig(window=5)
    weights = losses.LossWeights(mse=1.0, ssim=0.5, adversarial=0.1, tv=0.2)

    def pair(name: str) -> tuple[np.ndarray, np.ndarray]:
        d = _Inputs(name, seed)
        return d.uniform(0.0, 1.0, 2, 1, 12, 12), d.uniform(0.0, 1.0, 2, 1, 12, 12)

    def probs(name: str) -> tuple[np.ndarray, np.ndarray]:
        d = _Inputs(name, seed)
        return d.uniform(0.1, 0.9, 2, 1), d.uniform(0.1, 0.9, 2, 1)

    return {
        "mse_loss": lambda: grad_check(losses.mse_loss, pair("mse_loss"), name="mse_loss", seed=seed),
        "ssim": lambda: grad_check(lambda a, b: losses.ssim(a, b, losses.SsimConfig()), pair("ssim"), name="ssim", seed=seed),
        "ssim_loss": lambda: grad_check(lambda a, b: losses.ssim_loss(a, b, ssim_cfg), pair("ssim_loss"), name="ssim_loss", seed=seed),
        "tv_loss": lambda: grad_check(losses.tv_loss, pair("tv_loss")[:1], name="tv_loss", seed=seed),
        "adv_loss_g": lambda: grad_check(losses.adv_loss_g, probs("adv_loss_g")[:1], name="adv_loss_g", seed=seed),
        "disc_loss": lambda: grad_check(losses.disc_loss, probs("disc_loss"), name="disc_loss", seed=seed),
        "disc_loss_log": lambda: grad_check(
            lambda r, f: losses.disc_loss(r, f, log_form=True), probs("disc_loss_log"), name="disc_loss_log", seed=seed
        ),
        "gen_loss": lambda: grad_check(
            lambda p, t, d: losses.gen_loss(p, t, d, weights, ssim_cfg),
            [*pair("gen_loss"), probs("gen_loss")[0]],
            name="gen_loss",
            seed=seed,
        ),
        "total_loss": lambda: grad_check(
            lambda a, b, c, d: losses.total_loss(losses.mse_loss(a, b), losses.tv_loss(ops.add(c, d))),
            [*pair("total_loss.r"), *pair("total_loss.i")],
            name="total_loss",
            seed=seed,
        ),
    }


def suite(seed: int = 0) -> Dict[str, Callable[[], GradCheckReport]]:
    return {**_op_cases(seed), **_block_cases(seed), **_network_cases(seed), **_loss_cases(seed)}


def run_suite(names: Optional[Iterable[str]] = None, *, seed: int = 0) -> List[GradCheckReport]:
    cases = suite(seed)
    selected = list(cases) if names is None else list(names)
    unknown = [n for n in selected if n not in cases]
    if unknown:
        raise UsageError(f"unknown gradient checks: {', '.join(unknown)}")
    reports = []
    for name in selected:
        report = cases[name]()
        (logger.info if report.passed else logger.error)(
            "grad check %-20s %s (%d elements, max rel %.2e)",
            name, "ok" if report.passed else "FAILED", report.checked, report.max_rel_error,
        )
        reports.append(report)
    return reports


def report_table(reports: Iterable[GradCheckReport]) -> Table:
    table = Table(title="gradient checks")
    table.add_column("case")
    table.add_column("elements", justify="right")
    table.add_column("max rel error", justify="right")
    table.add_column("max abs error", justify="right")
    table.add_column("status")
    for r in reports:
        table.add_row(r.name, str(r.checked), f"{r.max_rel_error:.2e}", f"{r.max_abs_error:.2e}", "ok" if r.passed else "FAILED")
    return table


__all__ = ["suite", "run_suite", "report_table", "TOY_NET", "TOY_BLOCK"]
