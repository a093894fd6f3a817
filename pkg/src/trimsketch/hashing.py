"""Seeded 64-bit hash families.

All hashing goes through the splitmix64 finalizer, which is a bijection on
64-bit words. Hash values are pseudorandom stand-ins for fully random
functions; no derandomization guarantees are claimed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(GOLDEN)


class Purpose(IntEnum):
    BUCKET = 0
    SIGN = 1
    LEVEL = 2
    ZETA = 3
    TABLE = 4


_NUM_PURPOSES = len(Purpose)


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64).copy()
    x ^= x >> np.uint64(30)
    x *= _C1
    x ^= x >> np.uint64(27)
    x *= _C2
    x ^= x >> np.uint64(31)
    return x


def mix64_int(x: int) -> int:
    x &= MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class SketchSeed:
    """Master seed from which every per-row, per-purpose sub-seed is derived.

    Sub-seeds are ``mix64(master + GOLDEN * (code + 1))`` where ``code`` is an
    injective encoding of ``(row, purpose)``; since ``GOLDEN`` is odd and the
    finalizer is a bijection, distinct pairs always get distinct sub-seeds.
    """

    master_seed: int

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    def sub_seed(self, row: int, purpose: Purpose) -> int:
        if row < 0:
            raise ValueError(f"row must be nonnegative, got {row}")
        code = row * _NUM_PURPOSES + int(purpose)
        return mix64_int(self.master_seed + GOLDEN * (code + 1))

    def hash(self, row: int, purpose: Purpose, indices) -> np.ndarray:
        """64-bit hash of each index under the ``(row, purpose)`` sub-seed."""
        idx = np.asarray(indices, dtype=np.uint64)
        return mix64(idx * _GOLDEN + np.uint64(self.sub_seed(row, purpose)))

    def uniform(self, purpose: Purpose) -> float:
        """A single uniform draw in [0, 1) tied to this seed and purpose."""
        return (self.sub_seed(0, purpose) >> 11) / float(1 << 53)
