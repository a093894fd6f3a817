"""Nested subsampling levels, each backed by its own Count-Sketch.

Coordinate ``i`` gets level ``min(L, clz(hash(i)))``; it survives every level
up to and including that one, so level ``l`` sees each coordinate with
probability ``2**-l`` (level 0 sees everything) and survivor sets are nested.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from trimsketch.countsketch import CountSketchTable, SketchMergeError
from trimsketch.hashing import Purpose, SketchSeed

MAGIC = b"TSSS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIQQ")


def default_max_level(n: int) -> int:
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0


@dataclass(frozen=True)
class LevelAssignment:
    seed: SketchSeed
    max_level: int

    def __post_init__(self):
        if self.max_level < 0:
            raise ValueError(f"max_level must be nonnegative, got {self.max_level}")
        if self.max_level > 64:
            raise ValueError("at most 64 subsampling levels are supported")

    def level_of(self, indices) -> np.ndarray:
        """Deepest level each coordinate survives (vectorized)."""
        h = self.seed.hash(0, Purpose.LEVEL, indices)
        level = np.zeros(h.shape, dtype=np.int64)
        for ell in range(1, self.max_level + 1):
            level += h < np.uint64(1 << (64 - ell)) if ell < 64 else h == 0
        return level

    def level(self, index: int) -> int:
        return int(self.level_of([index])[0])


@dataclass(eq=False)
class SubsampledSketchStack:
    """``L + 1`` equally shaped Count-Sketch tables, one per subsampling level.

    The set of touched coordinates is tracked exactly; the observed set of
    level ``l`` is the subset of touched coordinates whose level is at least
    ``l``.
    """

    rows: int
    buckets: int
    n: int
    seed: SketchSeed = field(default_factory=lambda: SketchSeed(0))
    max_level: int | None = None
    tables: list[CountSketchTable] = field(default=None, repr=False)

    def __post_init__(self):
        if isinstance(self.seed, int):
            self.seed = SketchSeed(self.seed)
        if self.max_level is None:
            self.max_level = default_max_level(self.n)
        self.assignment = LevelAssignment(self.seed, self.max_level)
        if self.tables is None:
            self.tables = [
                CountSketchTable(self.rows, self.buckets, self.n, self.level_seed(ell))
                for ell in range(self.max_level + 1)
            ]
        elif len(self.tables) != self.max_level + 1:
            raise ValueError("need exactly one table per level")
        self._touched = np.empty(0, dtype=np.int64)
        self._pending: list[np.ndarray] = []

    @property
    def num_levels(self) -> int:
        return self.max_level + 1

    @property
    def total_buckets(self) -> int:
        return self.num_levels * self.rows * self.buckets

    def level_seed(self, level: int) -> SketchSeed:
        return SketchSeed(self.seed.sub_seed(level, Purpose.TABLE))

    def update(self, index: int, delta: int) -> None:
        if not 0 <= index < self.n:
            raise IndexError(f"coordinate {index} outside universe [0, {self.n})")
        for ell in range(self.assignment.level(index) + 1):
            self.tables[ell].update(index, delta)
        self._pending.append(np.array([index], dtype=np.int64))

    def update_many(self, indices, deltas) -> None:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        dl = np.broadcast_to(np.asarray(deltas, dtype=np.int64), idx.shape)
        if idx.size == 0:
            return
        self.tables[0]._check_indices(idx)
        levels = self.assignment.level_of(idx)
        for ell, table in enumerate(self.tables):
            keep = levels >= ell
            if not keep.any():
                break
            table.update_many(idx[keep], dl[keep])
        self._pending.append(idx.copy())

    def touched(self) -> np.ndarray:
        if self._pending:
            self._touched = np.unique(np.concatenate([self._touched, *self._pending]))
            self._pending = []
        return self._touched

    def observed(self, level: int) -> np.ndarray:
        """Sorted coordinates seen in the substream of ``level``."""
        touched = self.touched()
        if level == 0:
            return touched
        return touched[self.assignment.level_of(touched) >= level]

    def compatible(self, other: SubsampledSketchStack) -> bool:
        return (
            self.rows == other.rows
            and self.buckets == other.buckets
            and self.n == other.n
            and self.seed == other.seed
            and self.max_level == other.max_level
        )

    def merge(self, other: SubsampledSketchStack) -> SubsampledSketchStack:
        if not self.compatible(other):
            raise SketchMergeError("cannot merge stacks with different shape, levels or seed")
        out = SubsampledSketchStack(
            self.rows, self.buckets, self.n, self.seed, self.max_level,
            [a.merge(b) for a, b in zip(self.tables, other.tables)],
        )
        out._pending = [self.touched(), other.touched()]
        return out

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, SubsampledSketchStack):
            return NotImplemented
        return (
            self.compatible(other)
            and all(a == b for a, b in zip(self.tables, other.tables))
            and np.array_equal(self.touched(), other.touched())
        )

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, self.max_level, self.rows, self.buckets, self.n, self.seed.master_seed)]
        parts += [t.to_bytes() for t in self.tables]
        for ell in range(self.num_levels):
            obs = self.observed(ell)
            parts.append(struct.pack("<Q", obs.size))
            parts.append(obs.astype("<u8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> SubsampledSketchStack:
        if len(data) < _HEADER.size:
            raise ValueError("truncated stack header")
        magic, version, max_level, rows, buckets, n, master = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported stack version {version}")
        rest = data[_HEADER.size:]
        tables = []
        for _ in range(max_level + 1):
            table, rest = CountSketchTable._read(rest)
            tables.append(table)
        observed = []
        for _ in range(max_level + 1):
            (count,) = struct.unpack_from("<Q", rest)
            body = rest[8:8 + 8 * count]
            if len(body) != 8 * count:
                raise ValueError("truncated observed list")
            observed.append(np.frombuffer(body, dtype="<u8").astype(np.int64))
            rest = rest[8 + 8 * count:]
        if rest:
            raise ValueError(f"{len(rest)} trailing bytes after stack")
        stack = cls(rows, buckets, n, SketchSeed(master), max_level, tables)
        stack._pending = [observed[0]]
        for ell, obs in enumerate(observed):
            if not np.array_equal(stack.observed(ell), obs):
                raise ValueError(f"observed list for level {ell} is inconsistent with the level hash")
        return stack
