"""
dpl/core/rng.py

Deterministic random streams: xoshiro256++ seeded through splitmix64,
with Box-Muller Gaussian variates.

Identical seeds give bit-identical streams. A SeededRng is owned by one
logical task at a time; use spawn() for independent sub-streams.
"""
from __future__ import annotations

import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state: int) -> Tuple[int, int]:
    """
    Advance a splitmix64 state.

    Returns:
        Tuple of (new_state, output)
    """
    state = (state + _GOLDEN_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Seed of sub-stream `stream` of a master seed."""
    _, base = splitmix64(seed & _MASK64)
    _, out = splitmix64((base + (stream + 1) * _GOLDEN_GAMMA) & _MASK64)
    return out


class SeededRng:
    """xoshiro256++ generator with a Box-Muller normal source."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        state = self.seed
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s: List[int] = words
        self._spare: float | None = None

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

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def standard_normal(self) -> float:
        """Next N(0, 1) variate; both Box-Muller outputs are consumed in order."""
        if self._spare is not None:
            value = self._spare
            self._spare = None
            return value
        u1 = 1.0 - self.next_float()  # (0, 1]
        u2 = self.next_float()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = _TWO_PI * u2
        self._spare = radius * math.sin(angle)
        return radius * math.cos(angle)

    def normal_array(self, shape: int | Sequence[int]) -> np.ndarray:
        """Array of standard normal draws filled in row-major order."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        draws = [self.standard_normal() for _ in range(count)]
        return np.array(draws, dtype=np.float64).reshape(shape)

    def shuffle(self, items: Iterable) -> list:
        """Fisher-Yates shuffle returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def spawn(self, stream: int) -> "SeededRng":
        """Independent generator for sub-stream `stream` of this seed."""
        return SeededRng(derive_seed(self.seed, stream))

    def getstate(self) -> Tuple[Tuple[int, ...], float | None]:
        return tuple(self._s), self._spare
