"""Seeded pseudo-random numbers: splitmix64 seeding feeding xoshiro256++.

Pure Python so the stream is identical on every platform. Everything that
needs randomness (initialization, shuffling, augmentation draws, synthetic
data) goes through :class:`Xoshiro256pp`.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Mix a tuple of integers (e.g. seed, epoch, sample index) into one 64-bit seed."""
    state = 0
    out = 0
    for p in parts:
        state, out = splitmix64(state ^ (int(p) & MASK64))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256pp:
    def __init__(self, seed: int):
        sm = int(seed) & MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
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
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = lo + (hi - lo) * self.random()
        # rounding can land exactly on hi for some (lo, hi); keep the interval half-open
        return lo if u >= hi and hi > lo else u

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) (Lemire-style rejection on 64-bit products)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            m = self.next_u64() * n
            if (m & MASK64) >= threshold:
                return m >> 64

    def uniform_array(self, size: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = np.fromiter((self.next_u64() >> 11 for _ in range(size)), dtype=np.float64, count=size)
        u *= _INV_2_53
        out = lo + (hi - lo) * u
        if hi > lo:
            np.copyto(out, lo, where=out >= hi)
        return out

    def normal(self) -> float:
        # Box-Muller, one value per call; 1 - u keeps the log argument in (0, 1]
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
