"""TNSR container: a flat little-endian file of named float arrays.

Layout::

    b"TNSR" | version u8 | entry count u32
    per entry: name length u32 | UTF-8 name | rank u32 | dims u64 * rank
               | dtype tag u8 (0 = f32, 1 = f64) | raw little-endian payload
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from src.core.errors import FormatError, InvalidContainerError
from src.core.types import Sinogram


MAGIC = b"TNSR"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}

Entries = Union[Mapping[str, np.ndarray], Iterable[Tuple[str, np.ndarray]]]


def _normalize(entries: Entries) -> list[tuple[str, np.ndarray]]:
    items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
    seen: set[str] = set()
    out = []
    for name, value in items:
        if name in seen:
            raise InvalidContainerError(f"duplicate entry name {name!r}")
        seen.add(name)
        arr = np.asarray(value)
        if arr.dtype not in _TAGS:
            raise InvalidContainerError(f"entry {name!r} has unsupported dtype {arr.dtype}")
        if not np.all(np.isfinite(arr)):
            raise InvalidContainerError(f"entry {name!r} contains non-finite values")
        out.append((name, arr))
    return out


def encode_tensors(entries: Entries) -> bytes:
    items = _normalize(entries)
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(items))]
    for name, arr in items:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        tag = _TAGS[arr.dtype]
        chunks.append(struct.pack("<B", tag))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    return b"".join(chunks)


def decode_tensors(data: bytes) -> Dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated TNSR container")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError("bad TNSR magic")
    version, count = struct.unpack("<BI", take(5))
    if version != VERSION:
        raise FormatError(f"unsupported TNSR version {version}")
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("entry name is not UTF-8") from exc
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        (tag,) = struct.unpack("<B", take(1))
        if tag not in _DTYPES:
            raise FormatError(f"unknown dtype tag {tag}")
        dtype = _DTYPES[tag]
        numel = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(numel * dtype.itemsize)
        if name in out:
            raise InvalidContainerError(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after TNSR entries")
    return out


def save_tensor(path: str | os.PathLike[str], entries: Entries) -> None:
    Path(path).write_bytes(encode_tensors(entries))


def load_tensor(path: str | os.PathLike[str]) -> Dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())


def sinogram_entries(sino: Sinogram, prefix: str = "") -> list[tuple[str, np.ndarray]]:
    dot = f"{prefix}." if prefix else ""
    return [(f"{dot}angles", sino.angles.astype(np.float64)), (f"{dot}samples", sino.samples)]


def sinogram_from_entries(entries: Mapping[str, np.ndarray], prefix: str = "") -> Sinogram:
    dot = f"{prefix}." if prefix else ""
    try:
        return Sinogram(angles=entries[f"{dot}angles"], samples=entries[f"{dot}samples"])
    except KeyError as exc:
        raise InvalidContainerError(f"container has no sinogram {prefix or '<root>'}") from exc


def save_sinogram(path: str | os.PathLike[str], sino: Sinogram) -> None:
    save_tensor(path, sinogram_entries(sino))


def load_sinogram(path: str | os.PathLike[str]) -> Sinogram:
    return sinogram_from_entries(load_tensor(path))


__all__ = [
    "MAGIC",
    "VERSION",
    "encode_tensors",
    "decode_tensors",
    "save_tensor",
    "load_tensor",
    "sinogram_entries",
    "sinogram_from_entries",
    "save_sinogram",
    "load_sinogram",
]
