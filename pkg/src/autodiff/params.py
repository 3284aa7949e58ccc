from __future__ import annotations

from typing import Dict, Iterator, Mapping

import numpy as np

from src.core.errors import InvalidContainerError, ShapeError, UsageError
from src.autodiff.tensor import Tensor


class ModelParams:
    """Named parameter tensors plus non-trainable buffers of one model.

    Keys are dotted layer paths (``enc1.block0.pw1.weight``); checkpoint entries
    prefix them with the model name.
    """

    def __init__(self, name: str) -> None:
        self.name = name
        self.tensors: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.training = True

    def add(self, key: str, value: np.ndarray) -> Tensor:
        if key in self.tensors:
            raise UsageError(f"parameter {key!r} already exists in {self.name}")
        tensor = Tensor(np.array(value), requires_grad=True)
        self.tensors[key] = tensor
        return tensor

    def add_buffer(self, key: str, value: np.ndarray) -> np.ndarray:
        if key in self.buffers:
            raise UsageError(f"buffer {key!r} already exists in {self.name}")
        self.buffers[key] = np.array(value)
        return self.buffers[key]

    def __getitem__(self, key: str) -> Tensor:
        try:
            return self.tensors[key]
        except KeyError as exc:
            raise UsageError(f"{self.name} has no parameter {key!r}") from exc

    def __contains__(self, key: str) -> bool:
        return key in self.tensors

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __len__(self) -> int:
        return len(self.tensors)

    def buffer(self, key: str) -> np.ndarray:
        try:
            return self.buffers[key]
        except KeyError as exc:
            raise UsageError(f"{self.name} has no buffer {key!r}") from exc

    def scope(self, prefix: str = "") -> "ParamScope":
        return ParamScope(self, prefix)

    def numel(self) -> int:
        return sum(t.numel for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag
            if not flag:
                t.grad = None

    def train(self, mode: bool = True) -> "ModelParams":
        self.training = mode
        return self

    def eval(self) -> "ModelParams":
        return self.train(False)

    def astype(self, dtype: np.dtype | type) -> "ModelParams":
        for t in self.tensors.values():
            t.data = t.data.astype(dtype)
            t.grad = None
        for key, buf in self.buffers.items():
            self.buffers[key] = buf.astype(dtype)
        return self

    def state_entries(self) -> list[tuple[str, np.ndarray]]:
        entries = [(f"{self.name}.{key}", t.data) for key, t in self.tensors.items()]
        entries += [(f"{self.name}.{key}", buf) for key, buf in self.buffers.items()]
        return entries

    def load_entries(self, entries: Mapping[str, np.ndarray]) -> None:
        """Copy ``<name>.<key>`` entries into existing parameters and buffers; every key must be present."""
        for key, t in self.tensors.items():
            value = self._entry(entries, key)
            if value.shape != t.shape:
                raise ShapeError(f"{self.name}.{key}: checkpoint shape {value.shape} != {t.shape}")
            t.data = value.astype(t.dtype)
            t.grad = None
        for key, buf in self.buffers.items():
            value = self._entry(entries, key)
            if value.shape != buf.shape:
                raise ShapeError(f"{self.name}.{key}: checkpoint shape {value.shape} != {buf.shape}")
            buf[...] = value

    def _entry(self, entries: Mapping[str, np.ndarray], key: str) -> np.ndarray:
        full = f"{self.name}.{key}"
        if full not in entries:
            raise InvalidContainerError(f"checkpoint lacks entry {full!r}")
        return np.asarray(entries[full])


class ParamScope:
    """Prefix view over ModelParams used while building and running a model."""

    def __init__(self, params: ModelParams, prefix: str = "") -> None:
        self.params = params
        self.prefix = prefix

    def _key(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def child(self, name: str) -> "ParamScope":
        return ParamScope(self.params, self._key(name))

    def __getitem__(self, key: str) -> Tensor:
        return self.params[self._key(key)]

    def buffer(self, key: str) -> np.ndarray:
        return self.params.buffer(self._key(key))

    @property
    def training(self) -> bool:
        return self.params.training


__all__ = ["ModelParams", "ParamScope"]
