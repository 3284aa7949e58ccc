from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.core.errors import InvalidContainerError, UsageError
from src.autodiff.params import ModelParams


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for key, tensor in params:
            state.m[key] = np.zeros_like(tensor.data)
            state.v[key] = np.zeros_like(tensor.data)
        return state

    def state_entries(self, model: str) -> list[tuple[str, np.ndarray]]:
        entries = [(f"{model}.{key}.m", m) for key, m in self.m.items()]
        entries += [(f"{model}.{key}.v", v) for key, v in self.v.items()]
        entries.append((f"{model}.t", np.array([float(self.t)])))
        return entries

    def load_entries(self, model: str, entries: Mapping[str, np.ndarray]) -> None:
        try:
            for key in self.m:
                self.m[key] = np.asarray(entries[f"{model}.{key}.m"]).astype(self.m[key].dtype)
                self.v[key] = np.asarray(entries[f"{model}.{key}.v"]).astype(self.v[key].dtype)
            self.t = int(np.asarray(entries[f"{model}.t"]).reshape(-1)[0])
        except KeyError as exc:
            raise InvalidContainerError(f"checkpoint lacks optimizer entry {exc.args[0]!r}") from exc


def adam_step(params: ModelParams, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update over every trainable parameter, then clear the gradients."""
    trainable = [(key, t) for key, t in params if t.requires_grad]
    for key, tensor in trainable:
        if tensor.grad is None:
            raise UsageError(f"parameter {params.name}.{key} has no gradient")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for key, tensor in trainable:
        g = tensor.grad
        m = state.m.setdefault(key, np.zeros_like(tensor.data))
        v = state.v.setdefault(key, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        tensor.data = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(tensor.dtype)
        tensor.grad = None


__all__ = ["AdamState", "adam_step"]
