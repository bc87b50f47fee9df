"""Portable seeded random streams.

Every stochastic step in the package draws from PCG64 (XSL-RR 128/64) seeded
through numpy's SeedSequence. Only the raw 64-bit output words are consumed;
all derived draws (uniforms, integers, normals, permutations) are defined here
so results do not depend on numpy's Generator distribution code.
"""

from __future__ import annotations

import numpy as np

_TWO_POW_M53 = 2.0**-53


class PortableRng:
    """Deterministic random stream keyed by a tuple of non-negative integers."""

    def __init__(self, *seed_words: int) -> None:
        if not seed_words:
            raise ValueError("at least one seed word is required")
        words = [int(w) for w in seed_words]
        if any(w < 0 for w in words):
            raise ValueError(f"seed words must be non-negative, got {words}")
        self._bits = np.random.PCG64(np.random.SeedSequence(words))

    def raw(self, size: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(size), dtype=np.uint64).reshape(size)

    def uniform(self, size: int) -> np.ndarray:
        """Doubles in [0, 1) built from the top 53 bits of each word."""
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def integers(self, n: int, size: int) -> np.ndarray:
        """Integers in [0, n) as floor(u * n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        out = np.floor(self.uniform(size) * n).astype(np.int64)
        return np.minimum(out, n - 1)

    def normal(self, size: int) -> np.ndarray:
        """Standard normals by the Box-Muller transform (cosine branch only)."""
        u1 = 1.0 - self.uniform(size)  # (0, 1]
        u2 = self.uniform(size)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for pos, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[pos] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """First k entries of a lazily evaluated Fisher-Yates shuffle of range(n)."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        swapped: dict[int, int] = {}
        u = self.uniform(k)
        out = np.empty(k, dtype=np.int64)
        for i in range(k):
            j = i + min(int(u[i] * (n - i)), n - i - 1)
            vi = swapped.get(i, i)
            vj = swapped.get(j, j)
            swapped[i], swapped[j] = vj, vi
            out[i] = vj
        return out
