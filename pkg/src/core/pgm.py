from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from src.core.errors import FormatError
from src.core.types import Image


MAXVAL = 65535


def save_image(path: str | os.PathLike[str], image: Image, data_range: tuple[float, float] | None = None) -> None:
    """Write a 16-bit binary PGM; the value range is kept in a ``# range lo hi`` header comment."""
    lo, hi = data_range if data_range is not None else (float(image.pixels.min()), float(image.pixels.max()))
    if hi <= lo:
        hi = lo + 1.0
    scaled = (np.asarray(image.pixels, dtype=np.float64) - lo) / (hi - lo)
    raw = np.rint(np.clip(scaled, 0.0, 1.0) * MAXVAL).astype(">u2")
    header = f"P5\n# range {lo!r} {hi!r}\n{image.width} {image.height}\n{MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + raw.tobytes())


def _next_token(data: bytes, pos: int, comments: list[str]) -> tuple[str, int]:
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise FormatError("unterminated PGM header comment")
            comments.append(data[pos + 1:end].decode("ascii", errors="replace").strip())
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return data[start:pos].decode("ascii", errors="replace"), pos


def load_image(path: str | os.PathLike[str]) -> Image:
    data = Path(path).read_bytes()
    comments: list[str] = []
    magic, pos = _next_token(data, 0, comments)
    if magic != "P5":
        raise FormatError(f"bad PGM magic {magic!r}")
    try:
        width_tok, pos = _next_token(data, pos, comments)
        height_tok, pos = _next_token(data, pos, comments)
        maxval_tok, pos = _next_token(data, pos, comments)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as exc:
        raise FormatError("malformed PGM dimensions") from exc
    if width < 1 or height < 1 or not 0 < maxval <= MAXVAL:
        raise FormatError(f"invalid PGM header {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace before the raster
    sample_bytes = 2 if maxval > 255 else 1
    expected = width * height * sample_bytes
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise FormatError(f"truncated PGM raster: {len(raster)} of {expected} bytes")
    raw = np.frombuffer(raster, dtype=">u2" if sample_bytes == 2 else np.uint8).astype(np.float64)

    lo, hi = 0.0, 1.0
    for comment in comments:
        parts = comment.split()
        if len(parts) == 3 and parts[0] == "range":
            try:
                lo, hi = float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise FormatError(f"malformed range comment {comment!r}") from exc
    pixels = lo + raw.reshape(height, width) / maxval * (hi - lo)
    return Image(pixels=pixels)


__all__ = ["save_image", "load_image", "MAXVAL"]
