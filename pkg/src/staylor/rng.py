"""Portable seeded pseudo-random generator.

All sampling in this package goes through :class:`XorShift64Star` so that a
given seed yields the same stream in any implementation:

* state initialisation: ``state = splitmix64(seed)``; a zero result is
  replaced by ``0x9E3779B97F4A7C15``.
* step (xorshift64*): ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``, output
  ``x * 0x2545F4914F6CDD1D mod 2**64``.
* ``random()`` = ``(next_u64() >> 11) * 2**-53``.
* ``below(n)``: rejection sampling, draws ``r`` until
  ``r >= (2**64 - n) % n`` and returns ``r % n``.
* ``shuffle``: Fisher-Yates from the last index down, ``j = below(i + 1)``.
* ``normal()``: Box-Muller on ``u1 = 1 - random()``, ``u2 = random()``,
  returning only the cosine branch.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MULT = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int = 0):
        state = splitmix64(int(seed) & MASK64)
        self._state = state or _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        self.shuffle(perm)
        return perm

    def sample(self, population: list, k: int) -> list:
        """Uniform k-subset via a partial Fisher-Yates pass (order as drawn)."""
        pool = list(population)
        n = len(pool)
        if not 0 <= k <= n:
            raise ValueError("k out of range")
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def normal(self) -> float:
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
