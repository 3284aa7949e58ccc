"""Central-difference verification of the analytic backward passes (float64 only)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from src.core.errors import UsageError
from src.core.rng import Rng
from src.autodiff import ops
from src.autodiff.tensor import Tensor, no_grad


logger = logging.getLogger(__name__)

STEP = 1e-5
FALLBACK_STEP = 1e-6
ABS_TOLERANCE = 1e-9
REL_TOLERANCE = 1e-6


@dataclass
class GradCheckReport:
    name: str
    checked: int = 0
    max_rel_error: float = 0.0
    max_abs_error: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _element_ok(analytic: float, numeric: float, tolerance: float) -> tuple[bool, float, float]:
    abs_err = abs(analytic - numeric)
    scale = max(abs(analytic), abs(numeric))
    rel_err = abs_err / scale if scale > 0 else 0.0
    return abs_err <= ABS_TOLERANCE or rel_err < tolerance, abs_err, rel_err


def check_leaves(
    closure: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    *,
    name: str = "closure",
    tolerance: float = REL_TOLERANCE,
    step: float = STEP,
    seed: int = 0,
    max_elements: Optional[int] = None,
) -> GradCheckReport:
    """Compare backward() against central differences of L = sum(out * R), R fixed random.

    ``closure`` must rebuild the graph from ``leaves`` on every call. With
    ``max_elements`` set, that many elements are sampled across all leaves.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise UsageError("gradient checks run in float64 only")
        # perturbations write through a flat view
        leaf.data = np.ascontiguousarray(leaf.data)
    rng = Rng(seed)
    probe = closure()
    weights = rng.numpy_generator().standard_normal(probe.shape) / np.sqrt(max(probe.numel, 1))
    weights_t = Tensor(weights)

    def loss() -> Tensor:
        return ops.sum_(ops.mul(closure(), weights_t))

    for leaf in leaves:
        leaf.requires_grad = True
        leaf.grad = None
    loss().backward()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    def numeric(leaf: Tensor, flat_idx: int, h: float) -> float:
        flat = leaf.data.reshape(-1)
        original = flat[flat_idx]
        with no_grad():
            flat[flat_idx] = original + h
            up = loss().item()
            flat[flat_idx] = original - h
            down = loss().item()
        flat[flat_idx] = original
        return (up - down) / (2.0 * h)

    candidates = [(li, idx) for li, leaf in enumerate(leaves) for idx in range(leaf.numel)]
    if max_elements is not None and len(candidates) > max_elements:
        gen = rng.numpy_generator()
        picked = np.sort(gen.choice(len(candidates), size=max_elements, replace=False))
        candidates = [candidates[i] for i in picked]

    report = GradCheckReport(name=name)
    for li, idx in candidates:
        leaf = leaves[li]
        a = float(analytic[li].reshape(-1)[idx])
        ok, abs_err, rel_err = _element_ok(a, numeric(leaf, idx, step), tolerance)
        if not ok:
            # kink fallback: ReLU and max-pool switch points straddled by the first step
            ok, abs_err, rel_err = _element_ok(a, numeric(leaf, idx, FALLBACK_STEP), tolerance)
        report.checked += 1
        report.max_abs_error = max(report.max_abs_error, abs_err)
        if abs_err > ABS_TOLERANCE:
            report.max_rel_error = max(report.max_rel_error, rel_err)
        if not ok:
            report.failures.append(f"input {li} element {idx}: analytic {a:.6e} rel error {rel_err:.3e}")
    for leaf in leaves:
        leaf.grad = None
    logger.debug("grad check %s: %d elements, max rel %.3e", name, report.checked, report.max_rel_error)
    return report


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    *,
    name: str = "op",
    tolerance: float = REL_TOLERANCE,
    seed: int = 0,
    max_elements: Optional[int] = None,
) -> GradCheckReport:
    """Check ``fn(*tensors)`` with respect to every input array."""
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in inputs]
    return check_leaves(lambda: fn(*leaves), leaves, name=name, tolerance=tolerance, seed=seed, max_elements=max_elements)


__all__ = ["GradCheckReport", "grad_check", "check_leaves", "STEP", "REL_TOLERANCE"]
