"""Counter-based pseudo-randomness with reproducible, platform-free output.

Every value is a pure function of (seed, counter) through the splitmix64
finalizer, so a stream can be regenerated from its seed alone, split into
independent per-trial streams without coordination, and evaluated out of
order.  Bounded draws use rejection below a power of two, which keeps them
exactly uniform; that exactness is what the sampling layer's uniformity
guarantee rests on.

The vectorized block generator is bit-identical to the scalar path (same
constants, same wrap-around arithmetic mod 2**64); a test pins this.
"""

from __future__ import annotations

import numpy as np

__all__ = ["mix64", "raw64", "CounterRng", "derive_seed"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def raw64(seed: int, counter: int) -> int:
    """The counter-th output of the stream keyed by seed."""
    return mix64((seed + (counter + 1) * _GOLDEN) & _MASK64)


def _raw_block(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs for counters start..start+count-1 as a uint64 array."""
    ctr = np.arange(start + 1, start + 1 + count, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + ctr * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(master: int, *parts: int) -> int:
    """Fold integer labels (stream tags, n, trial index) into a child seed.

    Deterministic and order-sensitive; distinct label tuples collide only
    with the usual 2**-64 hashing probability.
    """
    state = mix64(master)
    for part in parts:
        state = mix64((state + _GOLDEN) ^ mix64((part + 1) & _MASK64))
    return state


class CounterRng:
    """Sequential view over a counter-based stream, with buffered refills."""

    def __init__(self, seed: int, block: int = 4096):
        self._seed = seed & _MASK64
        self._counter = 0
        self._block = block
        self._buf: list[int] = []
        self._pos = 0

    def next_raw(self) -> int:
        if self._pos >= len(self._buf):
            self._buf = _raw_block(self._seed, self._counter, self._block).tolist()
            self._counter += self._block
            self._pos = 0
        value = self._buf[self._pos]
        self._pos += 1
        return value

    def randbelow(self, bound: int) -> int:
        """Exactly uniform integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        mask = (1 << (bound - 1).bit_length()) - 1
        while True:
            value = self.next_raw() & mask
            if value < bound:
                return value

    def randint(self, lo: int, hi: int) -> int:
        """Exactly uniform integer in [lo, hi], endpoints included."""
        return lo + self.randbelow(hi - lo + 1)
