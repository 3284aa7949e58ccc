"""Unitary FFT on power-of-two lengths (1/sqrt(n) in both directions)."""

from __future__ import annotations

import numpy as np

from src.core.errors import SizeError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


def _check(x: np.ndarray, axis: int) -> np.ndarray:
    arr = np.asarray(x)
    n = arr.shape[axis]
    if not is_power_of_two(n):
        raise SizeError(f"FFT length {n} is not a power of two")
    return arr


def fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.fft.fft(_check(x, axis), axis=axis, norm="ortho")


def ifft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.fft.ifft(_check(x, axis), axis=axis, norm="ortho")


__all__ = ["fft", "ifft", "is_power_of_two", "next_power_of_two"]
