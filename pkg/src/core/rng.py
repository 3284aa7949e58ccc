from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np


_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(seed: int, *keys: int | str) -> int:
    """Mix a master seed with labels into an independent 64-bit seed."""
    payload = repr((int(seed) & _MASK64, tuple(keys))).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


class Rng:
    """xoshiro256++ stream seeded through splitmix64.

    Scalar draws come straight from the stream. Bulk array draws go through
    :meth:`numpy_generator`, a PCG64 generator whose seed is the next stream word,
    so the whole chain stays a pure function of the integer seed.
    """

    def __init__(self, seed: int) -> None:
        sm = int(seed) & _MASK64
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self._s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * self.random()

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        # Box-Muller, one value per call
        u1 = 1.0 - self.random()
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def integers(self, high: int) -> int:
        """Uniform integer in [0, high) by rejection."""
        if high <= 0:
            raise ValueError("high must be positive")
        limit = _MASK64 - (_MASK64 + 1) % high
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % high

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def choice(self, items: Sequence[object]) -> object:
        return items[self.integers(len(items))]

    def spawn(self, *keys: int | str) -> "Rng":
        return Rng(derive_seed(self.next_u64(), *keys))

    def numpy_generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.next_u64()))


__all__ = ["Rng", "splitmix64", "derive_seed"]
