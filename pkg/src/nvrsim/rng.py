"""Portable seedable RNG used by every workload generator.

All traces are derived from splitmix64 so that a (spec, seed) pair produces
byte-identical streams on any platform. The generator state advances by a
fixed odd constant, which means the n-th output is a pure function of
(seed, n) and whole blocks can be produced vectorised with numpy uint64
arithmetic (wraparound is the defined behaviour).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Scalar splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return _finalize(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = MASK64 - (MASK64 % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def shuffle_prefix(self, n: int, k: int) -> list[int]:
        """First k entries of a Fisher-Yates shuffle of range(n).

        Equivalent to drawing k distinct indices without replacement.
        """
        if k > n:
            raise ValueError("k must not exceed n")
        picked: dict[int, int] = {}
        out = []
        for i in range(k):
            j = i + self.next_below(n - i)
            vi = picked.get(i, i)
            vj = picked.get(j, j)
            picked[i], picked[j] = vj, vi
            out.append(vj)
        return out

    def fork(self, tag: int) -> "SplitMix64":
        """Derive an independent child stream; deterministic in (seed, tag)."""
        return SplitMix64(_finalize((self._state ^ _finalize(tag & MASK64)) & MASK64))


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministic child seed for sharded/parallel generation."""
    s = seed & MASK64
    for t in tags:
        s = _finalize((s + _GAMMA) & MASK64) ^ _finalize(t & MASK64)
        s &= MASK64
    return s


def uniform_block(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Vectorised u64 outputs number offset+1 .. offset+n of the stream.

    Matches SplitMix64(seed).next_u64() call-for-call.
    """
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.uint64(_GAMMA) * idx
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z


def uniform_floats(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Vectorised uniforms in [0, 1), identical to next_float() outputs."""
    return (uniform_block(seed, n, offset) >> np.uint64(11)) * (2.0 ** -53)
