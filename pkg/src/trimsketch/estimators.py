"""Trimmed-moment estimators evaluated on frozen level-set sizes.

Every estimator treats the sizes as a step function: ``sizes[j]`` coordinates
sit at the upper boundary ``zeta (1+eps)^(t-j)`` of band ``j``, bands ordered
from the largest magnitudes down. Coordinates beyond the estimated total are
zeros and contribute nothing.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from trimsketch.levelset import LevelSetSizes

KINDS = ("top_k", "trimmed_k", "sum_above_threshold", "g_index", "h_index_moment")


@dataclass
class MomentQuery:
    kind: str
    p: float = 1.0
    k: int | None = None
    threshold: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}; expected one of {KINDS}")
        if self.p < 0:
            raise ValueError(f"p must be nonnegative, got {self.p}")
        if self.k is not None and self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")


@dataclass
class QueryResult:
    value: float
    query: MomentQuery
    cut_index: int | None = None
    levels_used: list = field(default_factory=list)
    partial_fraction: float | None = None
    seed: int | None = None
    guarantee_flag: bool = True

    def to_dict(self) -> dict:
        return {
            "kind": self.query.kind,
            "k": self.query.k,
            "p": self.query.p,
            "epsilon": self.query.epsilon,
            "threshold": self.query.threshold,
            "value": self.value,
            "cut_index": self.cut_index,
            "seed": self.seed,
            "guarantee_flag": self.guarantee_flag,
            "diagnostics": {
                "levels_used": self.levels_used,
                "partial_fraction": self.partial_fraction,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> QueryResult:
        query = MomentQuery(
            kind=data["kind"], p=data["p"], k=data["k"], threshold=data["threshold"], epsilon=data["epsilon"]
        )
        diag = data.get("diagnostics", {})
        return cls(
            value=data["value"],
            query=query,
            cut_index=data["cut_index"],
            levels_used=diag.get("levels_used", []),
            partial_fraction=diag.get("partial_fraction"),
            seed=data["seed"],
            guarantee_flag=data["guarantee_flag"],
        )


def _weights(sizes: LevelSetSizes, p) -> list[float]:
    # positive band values, so p = 0 gives weight 1
    return [float(u) ** float(p) for u in sizes.representatives()]


def _top(sizes: LevelSetSizes, k, p):
    """Top-``k`` sum over the step function.

    Returns ``(value, cut_index, partial_fraction)``; ``cut_index`` is ``None``
    when the bands hold fewer than ``k`` coordinates in total.
    """
    if k <= 0:
        return 0.0, None, None
    w = _weights(sizes, p)
    covered, value = 0, 0.0
    for j, s in enumerate(sizes.sizes):
        if covered + s >= k:
            rest = max(k - covered, 0)
            return value + rest * w[j], j, rest / s
        covered += s
        value += s * w[j]
    return value, None, None


def _condition_holds(sizes: LevelSetSizes, k, p) -> bool:
    """Plug-in check of the top-``k`` hypothesis using the estimated bands."""
    if k <= 0:
        return True
    cfg = sizes.config
    q = 2.0 if p <= 2 else float(p)
    u = sizes.representatives()
    covered = 0
    for j, s in enumerate(sizes.sizes):
        if covered + s >= k:
            a_k = float(u[j])
            tail = (covered + s - k) * a_k ** q + sum(
                sz * float(u[i]) ** q for i, sz in enumerate(sizes.sizes[j + 1:], start=j + 1)
            )
            factor = (cfg.eps / max(math.log2(cfg.n), 1.0)) ** cfg.c
            return a_k ** q >= factor * tail / k
        covered += s
    # fewer than k nonzeros detected: the residual is empty
    return True


def _levels(sizes: LevelSetSizes, upto):
    if upto is None:
        upto = sizes.t - 1
    return [sizes.source_levels[j] for j in range(upto + 1) if sizes.sizes[j] > 0]


def top_k_moment(sizes: LevelSetSizes, k: int, p=1) -> QueryResult:
    """Estimated ``sum_{i<=k} |a_i|^p``."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    value, cut, frac = _top(sizes, k, p)
    query = MomentQuery("top_k", p=p, k=k, epsilon=sizes.config.eps)
    return QueryResult(
        value, query, cut, _levels(sizes, cut) if k else [], frac,
        sizes.config.seed.master_seed, _condition_holds(sizes, k, p),
    )


def trimmed_k_moment(sizes: LevelSetSizes, n: int, k: int, p=1) -> QueryResult:
    """Estimated moment of ranks ``k+1 .. n-k``; ``n`` is the universe size."""
    if k < 0 or 2 * k > n:
        raise ValueError(f"trimming needs 0 <= k <= n/2, got k={k}, n={n}")
    top_rest, cut_rest, _ = _top(sizes, n - k, p)
    top_head, cut_head, frac = _top(sizes, k, p)
    query = MomentQuery("trimmed_k", p=p, k=k, epsilon=sizes.config.eps)
    return QueryResult(
        top_rest - top_head, query, cut_head, _levels(sizes, cut_rest), frac,
        sizes.config.seed.master_seed, _condition_holds(sizes, k, p),
    )


def sum_above_threshold(sizes: LevelSetSizes, threshold, p=1) -> QueryResult:
    """Estimated moment of coordinates with magnitude at least ``threshold``.

    Bands are summed down to the last one whose upper boundary still reaches
    the threshold. Thresholds above the magnitude bound return 0 outright.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    cfg = sizes.config
    query = MomentQuery("sum_above_threshold", p=p, threshold=threshold, epsilon=cfg.eps)
    u = sizes.representatives()
    qualifying = [j for j in range(sizes.t) if u[j] >= threshold]
    if threshold > cfg.m or not qualifying:
        return QueryResult(0.0, query, None, [], None, cfg.seed.master_seed, True)
    cut = qualifying[-1]
    w = _weights(sizes, p)
    value = sum(sizes.sizes[j] * w[j] for j in range(cut + 1))
    k_est = sum(sizes.sizes[: cut + 1])
    return QueryResult(
        value, query, cut, _levels(sizes, cut), 1.0,
        cfg.seed.master_seed, _condition_holds(sizes, k_est, p),
    )


def _largest_feasible(lo: int, hi: int, gap) -> int | None:
    """Largest integer in ``[lo, hi]`` where the concave function ``gap`` is >= 0.

    The peak of ``gap`` is located by ternary search, then the right edge of
    the nonnegative region by bisection.
    """
    if lo > hi:
        return None
    a, b = lo, hi
    while b - a > 2:
        m1 = a + (b - a) // 3
        m2 = b - (b - a) // 3
        if gap(m1) < gap(m2):
            a = m1 + 1
        else:
            b = m2
    peak = max(range(a, b + 1), key=gap)
    if gap(peak) < 0:
        return None
    a, b = peak, hi
    while a < b:
        mid = (a + b + 1) // 2
        if gap(mid) >= 0:
            a = mid
        else:
            b = mid - 1
    return a


def g_index(sizes: LevelSetSizes, p=1, n: int | None = None) -> QueryResult:
    """Largest ``k`` whose estimated top-``k`` moment reaches ``k^(p+1)``.

    The top-``k`` estimate is linear in ``k`` inside each band, so the gap to
    ``k^(p+1)`` is concave there and each band is searched exactly. Past the
    last band the estimate is constant. ``n`` caps the answer when given.
    """
    if not 1 <= p <= 2:
        warnings.warn(f"g-index accuracy is only established for 1 <= p <= 2 (got p={p})", stacklevel=2)
    w = _weights(sizes, p)
    e = float(p) + 1
    best = 0
    covered, value = 0, 0.0
    for j, s in enumerate(sizes.sizes):
        if s > 0:
            base_cov, base_val, wj = covered, value, w[j]
            hit = _largest_feasible(
                base_cov + 1, base_cov + s, lambda k: base_val + (k - base_cov) * wj - float(k) ** e
            )
            if hit is not None:
                best = max(best, hit)
        covered += s
        value += s * w[j]
    beyond = math.floor(value ** (1.0 / e)) if value > 0 else 0
    while float(beyond + 1) ** e <= value:
        beyond += 1
    while beyond > 0 and float(beyond) ** e > value:
        beyond -= 1
    if beyond > covered:
        best = max(best, beyond)
    if n is not None:
        best = min(best, n)
    query = MomentQuery("g_index", p=p, k=best, epsilon=sizes.config.eps)
    _, cut, frac = _top(sizes, best, p)
    return QueryResult(
        float(best), query, cut, _levels(sizes, cut) if best else [], frac,
        sizes.config.seed.master_seed, (1 <= p <= 2) and _condition_holds(sizes, best, p),
    )


def h_index_search(sizes: LevelSetSizes) -> int:
    """Largest ``k`` with ``f_k >= k`` on the materialized step function."""
    u = sizes.representatives()
    best, covered = 0, 0
    for j, s in enumerate(sizes.sizes):
        if s > 0:
            reach = min(covered + s, math.floor(float(u[j])))
            if reach > covered:
                best = max(best, reach)
        covered += s
    return best


def h_index_moment(sizes: LevelSetSizes, p=0) -> QueryResult:
    """Estimated top-``h`` moment where ``h`` is the estimated h-index.

    ``p = 0`` returns the h-index itself. The sizes should come from a
    partition ten times finer than the target accuracy.
    """
    h = h_index_search(sizes)
    value, cut, frac = _top(sizes, h, p)
    query = MomentQuery("h_index_moment", p=p, k=h, epsilon=sizes.config.eps)
    return QueryResult(
        value, query, cut, _levels(sizes, cut) if h else [], frac,
        sizes.config.seed.master_seed, _condition_holds(sizes, h, p),
    )


def configure_for_large_p(n: int, p, eps: float, c: float = 1) -> int:
    """Buckets per Count-Sketch for ``p > 2``: ``ceil((log2 n / eps)^(c+6) * n^(1-2/p))``."""
    if p <= 2:
        raise ValueError(f"the large-p configuration needs p > 2, got p={p}")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    raw = (max(math.log2(n), 1.0) / eps) ** (c + 6) * float(n) ** (1 - 2 / p)
    nearest = round(raw)
    if abs(raw - nearest) <= 1e-9 * max(raw, 1.0):
        return max(1, int(nearest))
    return max(1, math.ceil(raw))


def run_query(sizes: LevelSetSizes, query: MomentQuery, n: int | None = None) -> QueryResult:
    """Dispatch a :class:`MomentQuery` to its estimator."""
    if query.kind == "top_k":
        return top_k_moment(sizes, query.k or 0, query.p)
    if query.kind == "trimmed_k":
        return trimmed_k_moment(sizes, n if n is not None else sizes.config.n, query.k or 0, query.p)
    if query.kind == "sum_above_threshold":
        return sum_above_threshold(sizes, query.threshold or 0, query.p)
    if query.kind == "g_index":
        return g_index(sizes, query.p, n)
    return h_index_moment(sizes, query.p)


__all__ = [
    "KINDS",
    "MomentQuery",
    "QueryResult",
    "configure_for_large_p",
    "g_index",
    "h_index_moment",
    "run_query",
    "sum_above_threshold",
    "top_k_moment",
    "trimmed_k_moment",
]
