"""Count-Sketch counter table with point queries and heavy-hitter extraction.

Row ``l`` keeps ``C[l, b] = sum_{j: h_l(j) = b} g_l(j) * x_j`` in exact 64-bit
signed integers. A point estimate is the median over rows of
``g_l(i) * C[l, h_l(i)]``; for an even number of rows the lower middle value
is taken so estimates stay integral.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from trimsketch.hashing import Purpose, SketchSeed

INT64_MAX = (1 << 63) - 1
INT64_MIN = -(1 << 63)
# below this, no int64 sum of the batch can wrap
_SAFE_BOUND = float(1 << 62)

MAGIC = b"TSCS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIQQ")


def _robust_sigma(counters: np.ndarray, mid: int) -> float:
    per_row = 1.4826 * np.median(np.abs(counters.astype(np.float64)), axis=1)
    return float(np.sort(per_row)[mid])


class SketchMergeError(ValueError):
    """Raised when two sketches with different shapes or seeds are combined."""


@dataclass
class HeavyHitterReport:
    indices: np.ndarray
    estimates: np.ndarray
    theta: Fraction | float
    k: int
    # set by the peel decoder when the decoded values explain every counter
    exact: bool = False

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(int(i), int(e)) for i, e in zip(self.indices, self.estimates)]

    def __len__(self):
        return len(self.indices)

    def __contains__(self, index):
        return bool(np.any(self.indices == index))


@dataclass(eq=False)
class CountSketchTable:
    """A ``rows x buckets`` Count-Sketch over the universe ``[0, n)``."""

    rows: int
    buckets: int
    n: int
    seed: SketchSeed = field(default_factory=lambda: SketchSeed(0))
    counters: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.rows <= 0:
            raise ValueError(f"rows must be positive, got {self.rows}")
        if self.buckets <= 0:
            raise ValueError(f"buckets must be positive, got {self.buckets}")
        if self.n <= 0:
            raise ValueError(f"universe size must be positive, got {self.n}")
        if isinstance(self.seed, int):
            self.seed = SketchSeed(self.seed)
        if self.counters is None:
            self.counters = np.zeros((self.rows, self.buckets), dtype=np.int64)
        elif self.counters.shape != (self.rows, self.buckets):
            raise ValueError(f"counters shape {self.counters.shape} does not match ({self.rows}, {self.buckets})")

    # -- hashing ---------------------------------------------------------

    def bucket_of(self, row: int, indices) -> np.ndarray:
        h = self.seed.hash(row, Purpose.BUCKET, indices)
        return (h % np.uint64(self.buckets)).astype(np.int64)

    def sign_of(self, row: int, indices) -> np.ndarray:
        h = self.seed.hash(row, Purpose.SIGN, indices)
        return 1 - 2 * (h >> np.uint64(63)).astype(np.int64)

    def _check_indices(self, idx: np.ndarray):
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            bad = idx[(idx < 0) | (idx >= self.n)][0]
            raise IndexError(f"coordinate {int(bad)} outside universe [0, {self.n})")

    # -- updates ---------------------------------------------------------

    def update(self, index: int, delta: int) -> None:
        """Apply one turnstile update ``x[index] += delta``."""
        if not 0 <= index < self.n:
            raise IndexError(f"coordinate {index} outside universe [0, {self.n})")
        delta = int(delta)
        for row in range(self.rows):
            b = int(self.bucket_of(row, [index])[0])
            g = int(self.sign_of(row, [index])[0])
            value = int(self.counters[row, b]) + g * delta
            if not INT64_MIN <= value <= INT64_MAX:
                raise OverflowError(f"counter [{row}, {b}] would overflow 64 bits")
            self.counters[row, b] = value

    def update_many(self, indices, deltas) -> None:
        """Apply a batch of updates; equivalent to calling :meth:`update` in order."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if isinstance(deltas, (list, tuple)) and any(abs(int(d)) > INT64_MAX for d in deltas):
            raise OverflowError("delta exceeds 64-bit range")
        dl = np.broadcast_to(np.asarray(deltas, dtype=np.int64), idx.shape)
        if idx.size == 0:
            return
        self._check_indices(idx)
        bound = float(np.abs(self.counters).max(initial=0)) + float(np.abs(dl.astype(np.float64)).sum())
        if bound < _SAFE_BOUND:
            for row in range(self.rows):
                np.add.at(self.counters[row], self.bucket_of(row, idx), self.sign_of(row, idx) * dl)
            return
        # exact slow path: accumulate in Python integers, then range-check
        exact = self.counters.astype(object)
        for row in range(self.rows):
            contrib = self.sign_of(row, idx).astype(object) * dl.astype(object)
            np.add.at(exact[row], self.bucket_of(row, idx), contrib)
        if any(not INT64_MIN <= int(v) <= INT64_MAX for v in exact.ravel()):
            raise OverflowError("counter would overflow 64 bits")
        self.counters = exact.astype(np.int64)

    # -- queries ---------------------------------------------------------

    def row_values(self, indices) -> np.ndarray:
        """``g_l(i) * C[l, h_l(i)]`` for every row ``l`` (shape ``rows x len``)."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        self._check_indices(idx)
        out = np.empty((self.rows, idx.size), dtype=np.int64)
        for row in range(self.rows):
            out[row] = self.sign_of(row, idx) * self.counters[row, self.bucket_of(row, idx)]
        return out

    def estimate_many(self, indices) -> np.ndarray:
        vals = self.row_values(indices)
        if self.rows == 1:
            return vals[0]
        vals.sort(axis=0)
        return vals[(self.rows - 1) // 2]

    def estimate(self, index: int) -> int:
        return int(self.estimate_many([index])[0])

    def residual_norm(self, k: int) -> float:
        """Estimate ``||x_{-k}||_2`` from the counters alone.

        Each row drops its ``k`` largest buckets by magnitude and sums the
        squares of the rest; the median over rows is returned.
        """
        sq = self.counters.astype(np.float64) ** 2
        sq.sort(axis=1)
        keep = max(self.buckets - k, 0)
        per_row = sq[:, :keep].sum(axis=1)
        return float(np.sqrt(np.sort(per_row)[(self.rows - 1) // 2]))

    def noise_scale(self) -> float:
        """Robust per-bucket noise level: median over rows of the counters' MAD-based sigma.

        A minority of buckets holding heavy coordinates does not move it, so
        it tracks the light-tail error that every point estimate carries.
        """
        return _robust_sigma(self.counters, (self.rows - 1) // 2)

    def heavy_hitters(
        self,
        theta,
        k: int,
        tail_norm_hint,
        candidates=None,
        *,
        min_agreement: int = 0,
        agreement_tol: float = 0.0,
    ) -> HeavyHitterReport:
        """Report every candidate whose estimate reaches ``0.9 * theta * tail_norm_hint``.

        ``candidates`` defaults to the whole universe, which is only sensible
        for small ``n``; stream consumers pass the indices they observed.
        With ``min_agreement > 0`` a candidate is also required to have that
        many rows within ``agreement_tol`` of its median, which rejects light
        coordinates whose median was dragged up by collisions.
        """
        if not 0 < theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {theta}")
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        if tail_norm_hint < 0:
            raise ValueError(f"tail_norm_hint must be nonnegative, got {tail_norm_hint}")
        if candidates is None:
            candidates = np.arange(self.n, dtype=np.int64)
        cand = np.unique(np.asarray(candidates, dtype=np.int64))
        rows = self.row_values(cand)
        est = np.sort(rows, axis=0)[(self.rows - 1) // 2] if self.rows > 1 else rows[0]
        cutoff = 0.9 * float(theta) * float(tail_norm_hint)
        keep = (est != 0) & (np.abs(est) >= cutoff)
        if min_agreement > 0:
            agree = (np.abs(rows - est) <= agreement_tol).sum(axis=0)
            keep &= agree >= min_agreement
        return HeavyHitterReport(cand[keep], est[keep], theta, k)

    def peel(
        self,
        candidates,
        *,
        min_agreement: int,
        noise_mult: float = 3.0,
        known_indices=None,
        known_values=None,
        max_rounds: int = 50,
    ) -> HeavyHitterReport:
        """Iteratively decode heavy coordinates by verified subtraction.

        Each round accepts the candidates whose median clears
        ``noise_mult * sigma`` and that have enough rows within
        ``noise_mult * sigma`` of the median, where ``sigma`` is the robust
        noise scale of the residual counters. Accepted values are subtracted
        before the next round, so collisions among heavy coordinates resolve
        progressively. Every round uses the strictest agreement count, from
        ``min_agreement`` down to a simple majority, that still yields
        candidates, and accepts at most one coordinate per bucket, largest
        first. A round that would raise the residual noise is discarded and
        decoding stops.
        ``known_*`` are coordinates decoded elsewhere (for
        instance at a deeper subsampling level); they are subtracted up front.
        Newly decoded estimates are refined medians against the final
        residual, not plain point estimates of this table; known values are
        reported unchanged.
        """
        cand = np.unique(np.asarray(candidates, dtype=np.int64))
        known = np.asarray(known_indices if known_indices is not None else [], dtype=np.int64)
        kval = np.asarray(known_values if known_values is not None else [], dtype=np.int64)
        if known.size:
            cand = np.setdiff1d(cand, known, assume_unique=True)
        self._check_indices(cand)
        self._check_indices(known)
        residual = self.counters.astype(np.int64).copy()
        b_c = np.stack([self.bucket_of(r, cand) for r in range(self.rows)]) if cand.size else None
        g_c = np.stack([self.sign_of(r, cand) for r in range(self.rows)]) if cand.size else None
        b_k = np.stack([self.bucket_of(r, known) for r in range(self.rows)])
        g_k = np.stack([self.sign_of(r, known) for r in range(self.rows)])
        for r in range(self.rows):
            np.subtract.at(residual[r], b_k[r], g_k[r] * kval)

        mid = (self.rows - 1) // 2
        majority = self.rows // 2 + 1
        strict = max(min_agreement, majority)
        found_val, found_pos = [], []
        active = np.ones(cand.size, dtype=bool)
        sigma = _robust_sigma(residual, mid)
        for _ in range(max_rounds):
            pos = np.nonzero(active)[0]
            if pos.size == 0:
                break
            tol = noise_mult * sigma
            rows = np.take_along_axis(residual, b_c[:, pos], axis=1) * g_c[:, pos]
            est = np.sort(rows, axis=0)[mid]
            agree = (np.abs(rows - est) <= tol).sum(axis=0)
            big = np.abs(est) >= max(tol, 1.0)
            # strictest agreement level that still yields candidates
            ok = None
            for need in range(strict, majority - 1, -1):
                sel = big & (agree >= need)
                if sel.any():
                    ok = np.nonzero(sel)[0]
                    break
            if ok is None:
                break
            ok = ok[np.argsort(-np.abs(est[ok]), kind="stable")]
            # one acceptance per bucket per round, most confident first
            taken = np.zeros(residual.shape, dtype=bool)
            chosen = []
            for o in ok:
                cells = b_c[:, pos[o]]
                if taken[np.arange(self.rows), cells].any():
                    continue
                taken[np.arange(self.rows), cells] = True
                chosen.append(o)
            hit, val = pos[chosen], est[chosen]
            trial = residual.copy()
            for r in range(self.rows):
                np.subtract.at(trial[r], b_c[r, hit], g_c[r, hit] * val)
            new_sigma = _robust_sigma(trial, mid)
            if new_sigma > 1.05 * sigma:
                # subtraction made the residual noisier: stop before it compounds
                break
            residual, sigma = trial, new_sigma
            active[hit] = False
            found_pos.append(hit)
            found_val.append(val)

        hit = np.concatenate(found_pos) if found_pos else np.zeros(0, dtype=np.int64)
        val = np.concatenate(found_val) if found_val else np.zeros(0, dtype=np.int64)
        if hit.size:
            # add each new coordinate back onto the final residual and re-take its median
            rows = np.take_along_axis(residual, b_c[:, hit], axis=1) * g_c[:, hit] + val
            val = np.sort(rows, axis=0)[mid]
        # known values come from a cleaner table and are kept as given
        idx = np.concatenate([known, cand[hit]])
        values = np.concatenate([kval, val])
        order = np.argsort(idx, kind="stable")
        idx, values = idx[order], values[order]
        keep = values != 0
        return HeavyHitterReport(idx[keep], values[keep], 1, 0, exact=not residual.any())

    def is_zero(self) -> bool:
        return not self.counters.any()

    # -- linear structure ------------------------------------------------

    def compatible(self, other: CountSketchTable) -> bool:
        return (
            self.rows == other.rows
            and self.buckets == other.buckets
            and self.n == other.n
            and self.seed == other.seed
        )

    def merge(self, other: CountSketchTable) -> CountSketchTable:
        """Counter-wise sum; identical to one table fed both streams."""
        if not self.compatible(other):
            raise SketchMergeError("cannot merge tables with different shape, universe or seed")
        bound = float(np.abs(self.counters).max(initial=0)) + float(np.abs(other.counters).max(initial=0))
        if bound >= _SAFE_BOUND:
            exact = self.counters.astype(object) + other.counters.astype(object)
            if any(not INT64_MIN <= int(v) <= INT64_MAX for v in exact.ravel()):
                raise OverflowError("merged counter would overflow 64 bits")
        return CountSketchTable(self.rows, self.buckets, self.n, self.seed, self.counters + other.counters)

    __add__ = merge

    def __neg__(self):
        return CountSketchTable(self.rows, self.buckets, self.n, self.seed, -self.counters)

    def copy(self) -> CountSketchTable:
        return CountSketchTable(self.rows, self.buckets, self.n, self.seed, self.counters.copy())

    def __eq__(self, other):
        if not isinstance(other, CountSketchTable):
            return NotImplemented
        return self.compatible(other) and np.array_equal(self.counters, other.counters)

    # -- serialization ---------------------------------------------------

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, VERSION, self.rows, self.buckets, self.n, self.seed.master_seed)
        return header + self.counters.astype("<i8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> CountSketchTable:
        table, rest = cls._read(data)
        if rest:
            raise ValueError(f"{len(rest)} trailing bytes after table")
        return table

    @classmethod
    def _read(cls, data: bytes) -> tuple[CountSketchTable, bytes]:
        if len(data) < _HEADER.size:
            raise ValueError("truncated table header")
        magic, version, rows, buckets, n, master = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported table version {version}")
        size = rows * buckets * 8
        body = data[_HEADER.size:_HEADER.size + size]
        if len(body) != size:
            raise ValueError("truncated counter block")
        counters = np.frombuffer(body, dtype="<i8").astype(np.int64).reshape(rows, buckets)
        return cls(rows, buckets, n, SketchSeed(master), counters), data[_HEADER.size + size:]
