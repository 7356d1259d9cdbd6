"""Deterministic pseudo-random stream used by all generators.

The generator is xorshift64* seeded through one round of splitmix64,
chosen so that any implementation in any language reproduces the same
stream bit for bit:

    state ^= state >> 12
    state ^= (state << 25) & (2^64 - 1)
    state ^= state >> 27
    output = (state * 0x2545F4914F6CDD1D) mod 2^64

Uniform doubles take the top 53 bits of the output (``output >> 11``
times 2^-53); normals come from the Box-Muller transform applied to
consecutive uniforms.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class Xorshift64Star:
    """Seeded xorshift64* stream with uniform and normal draws."""

    def __init__(self, seed: int):
        self._state = _splitmix64(int(seed) & _MASK)
        if self._state == 0:
            self._state = _GOLDEN
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s ^= (s << 25) & _MASK
        s ^= s >> 27
        self._state = s
        return (s * _MULT) & _MASK

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def normal(self) -> float:
        """Standard normal via Box-Muller (pairs are cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(1.0 - u1))
        angle = 2.0 * math.pi * u2
        self._spare_normal = radius * math.sin(angle)
        return radius * math.cos(angle)

    def randint(self, n: int) -> int:
        """Integer in [0, n) by modulo reduction (documented, tiny bias)."""
        if n < 1:
            raise ValueError(f"randint bound must be positive, got {n}")
        return self.next_u64() % n

    def uniform_values(self, count: int) -> list[float]:
        return [self.uniform() for _ in range(count)]

    def normal_values(self, count: int) -> list[float]:
        return [self.normal() for _ in range(count)]

    def sample_without_replacement(self, population: int, count: int) -> list[int]:
        """First ``count`` entries of a Fisher-Yates shuffle of range(population)."""
        if count > population:
            raise ValueError(f"cannot sample {count} from {population}")
        items = list(range(population))
        for i in range(population - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
        return items[:count]
