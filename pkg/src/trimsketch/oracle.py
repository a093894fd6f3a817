"""Exact reference statistics computed by sorting the full vector.

Integral exponents give exact integers; anything else falls back to floats.
Zero coordinates rank below every nonzero one and contribute nothing, even
for ``p = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction


def power(v: int, p):
    """``|v|^p`` with ``0^0 = 0``."""
    v = abs(v)
    if v == 0:
        return 0
    if isinstance(p, int) or (isinstance(p, (float, Fraction)) and float(p).is_integer()):
        return v ** int(p)
    return float(v) ** float(p)


@dataclass
class ExactVector:
    """Sparse integer frequency vector over ``[0, n)``."""

    n: int
    entries: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {int(i): int(v) for i, v in self.entries.items() if v != 0}
        for i in self.entries:
            if not 0 <= i < self.n:
                raise IndexError(f"coordinate {i} outside universe [0, {self.n})")
        self._sorted = None

    @classmethod
    def from_dense(cls, values, n: int | None = None) -> ExactVector:
        values = list(values)
        return cls(n if n is not None else len(values), dict(enumerate(values)))

    @classmethod
    def from_updates(cls, n: int, indices, deltas) -> ExactVector:
        acc: dict[int, int] = {}
        for i, d in zip(indices, deltas):
            i = int(i)
            acc[i] = acc.get(i, 0) + int(d)
        return cls(n, acc)

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def sorted_magnitudes(self) -> list[int]:
        """Nonzero magnitudes in nonincreasing order (the vector ``a`` without zeros)."""
        if self._sorted is None:
            self._sorted = sorted((abs(v) for v in self.entries.values()), reverse=True)
        return self._sorted

    def scaled(self, c: int) -> ExactVector:
        return ExactVector(self.n, {i: c * v for i, v in self.entries.items()})

    def max_abs(self) -> int:
        return max((abs(v) for v in self.entries.values()), default=0)


def full_moment(x: ExactVector, p):
    return sum(power(v, p) for v in x.sorted_magnitudes())


def exact_top_k(x: ExactVector, k: int, p):
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    return sum(power(v, p) for v in x.sorted_magnitudes()[:k])


def residual_norm(x: ExactVector, k: int, p):
    """``||x_{-k}||_p^p``: the moment of everything below the top ``k``."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    return sum(power(v, p) for v in x.sorted_magnitudes()[k:])


def exact_trimmed(x: ExactVector, k: int, p):
    """Moment of ranks ``k+1 .. n-k`` (zeros fill the lowest ranks)."""
    if k < 0 or 2 * k > x.n:
        raise ValueError(f"trimming needs 0 <= k <= n/2, got k={k}, n={x.n}")
    return sum(power(v, p) for v in x.sorted_magnitudes()[k:x.n - k])


def exact_sum_above(x: ExactVector, threshold, p):
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    return sum(power(v, p) for v in x.sorted_magnitudes() if v >= threshold)


def exact_h_index(x: ExactVector) -> int:
    h = 0
    for rank, v in enumerate(x.sorted_magnitudes(), start=1):
        if v < rank:
            break
        h = rank
    return h


def _integer_root_floor(s: int, e: int) -> int:
    """Largest integer ``r`` with ``r**e <= s``."""
    if s <= 0:
        return 0
    r = int(round(s ** (1.0 / e)))
    while r ** e > s:
        r -= 1
    while (r + 1) ** e <= s:
        r += 1
    return r


def exact_g_index(x: ExactVector, p=1) -> int:
    """Largest ``k <= n`` whose top-``k`` moment reaches ``k^(p+1)``."""
    a = x.sorted_magnitudes()
    integral = isinstance(p, int) or float(p).is_integer()
    best, total = 0, 0
    for rank, v in enumerate(a, start=1):
        total += power(v, p)
        target = rank ** (int(p) + 1) if integral else float(rank) ** (float(p) + 1)
        if total >= target:
            best = rank
    # past the nonzeros the top-k moment stays at ``total``
    if integral:
        beyond = _integer_root_floor(int(total), int(p) + 1)
    else:
        beyond = math.floor(total ** (1.0 / (float(p) + 1)))
        while float(beyond + 1) ** (float(p) + 1) <= total:
            beyond += 1
        while beyond > 0 and float(beyond) ** (float(p) + 1) > total:
            beyond -= 1
    if beyond > len(a):
        best = max(best, beyond)
    return min(best, x.n)


def check_condition(x: ExactVector, k: int, eps, c, p=2):
    """Evaluate the top-``k`` hypothesis ``a_k^q >= (eps/log n)^c * ||x_{-k}||_q^q / k``.

    ``q = 2`` for ``p <= 2`` and ``q = p`` otherwise. Returns
    ``(holds, lhs, rhs)`` with both sides as exact fractions; the factor
    ``(eps/log2 n)^c`` is the only rounded quantity.
    """
    if k < 1:
        raise ValueError("the condition is defined for k >= 1")
    q = 2 if p <= 2 else p
    a = x.sorted_magnitudes()
    a_k = a[k - 1] if k <= len(a) else 0
    base = Fraction(float(eps) / max(math.log2(x.n), 1.0))
    factor = base ** int(c) if float(c).is_integer() else Fraction(float(base) ** float(c))
    lhs = Fraction(power(a_k, q))
    rhs = factor * Fraction(residual_norm(x, k, q)) / k
    return lhs >= rhs, lhs, rhs
