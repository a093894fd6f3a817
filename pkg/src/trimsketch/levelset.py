"""Geometric level sets and their size estimates.

Magnitudes are binned into bands ``[zeta (1+eps)^(t-j-1), zeta (1+eps)^(t-j))``
for ``j = 0 .. t-1``, with ``j = 0`` the top band and ``zeta`` a random shift in
``[1/2, 1]``. Each band's size is estimated from the heavy hitters of the
subsampling levels: the top ``t0 + 1`` bands are counted directly on the full
stream, and every other band takes the deepest level that still holds at
least ``z`` of its members and rescales that count by ``2**level``. When
the peel decoder explains level 0 exactly (zero residual), a band that
reaches the quorum nowhere keeps its level-0 count instead of 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from trimsketch.hashing import Purpose, SketchSeed

DIRECT = "direct"
NONE = "none"


def _log2(x: float) -> float:
    return math.log2(x) if x > 1 else 1.0


@dataclass
class LevelSetConfig:
    """Parameters of the level-set partition and the size estimator.

    ``K`` scales the number of directly counted top sets, ``C_z`` the survivor
    quorum and ``c`` the default heavy-hitter threshold exponent. ``zeta`` is
    drawn from ``seed`` unless pinned explicitly.
    """

    eps: float
    m: int
    n: int
    seed: SketchSeed | int = 0
    K: float = 4.0
    C_z: float = 2.0
    c: float = 1.0
    zeta: float | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.m < 1:
            raise ValueError(f"magnitude bound m must be a positive integer, got {self.m}")
        if self.n < 1:
            raise ValueError(f"universe size n must be positive, got {self.n}")
        if isinstance(self.seed, int):
            self.seed = SketchSeed(self.seed)
        if self.zeta is None:
            self.zeta = 0.5 + 0.5 * self.seed.uniform(Purpose.ZETA)
        if not 0.5 <= self.zeta <= 1:
            raise ValueError(f"zeta must lie in [1/2, 1], got {self.zeta}")
        base = 1.0 + self.eps
        # largest e with base**e <= m, robust to log rounding
        e = math.floor(math.log(self.m) / math.log(base))
        while base ** (e + 1) <= self.m:
            e += 1
        while e > 0 and base ** e > self.m:
            e -= 1
        self.t = e + 1
        t0 = math.floor(self.K * math.log2(_log2(self.m) / self.eps)) if self.K > 0 else 0
        self.t0 = min(max(t0, 0), self.t - 1)
        self.z = max(1, math.ceil(self.C_z * _log2(self.n) / self.eps ** 2))
        # powers[e] = zeta (1+eps)^e; band j spans [powers[t-j-1], powers[t-j])
        self.powers = self.zeta * base ** np.arange(self.t + 1, dtype=np.float64)

    def default_theta(self) -> float:
        return min(1.0, (self.eps / _log2(self.n)) ** (self.c + 4))

    def lower(self, j: int) -> float:
        return float(self.powers[self.t - j - 1])

    def upper(self, j: int) -> float:
        return float(self.powers[self.t - j])

    def uppers(self) -> np.ndarray:
        """Upper boundary of every band, top band first."""
        return self.powers[::-1][: self.t].copy()


def level_indices(values, cfg: LevelSetConfig) -> np.ndarray:
    """Vectorized :func:`level_index` for positive magnitudes."""
    v = np.asarray(values, dtype=np.float64)
    if v.size and v.min() <= 0:
        raise ValueError("level sets are defined for positive magnitudes only")
    e = np.searchsorted(cfg.powers[: cfg.t], v, side="right") - 1
    # below zeta: last band; at or above the top boundary: first band
    e = np.clip(e, 0, cfg.t - 1)
    return cfg.t - 1 - e


def level_index(v, cfg: LevelSetConfig) -> int:
    """Index of the band holding magnitude ``v``.

    Magnitudes below the lowest boundary fall into the last band and
    magnitudes at or above the top boundary into band 0, so every positive
    value belongs to exactly one band.
    """
    if v <= 0:
        raise ValueError(f"level sets are defined for positive magnitudes only, got {v}")
    return int(level_indices([v], cfg)[0])


@dataclass
class LevelSetSizes:
    sizes: list[int]
    source_levels: list[int | str]
    config: LevelSetConfig
    survivors: np.ndarray | None = field(default=None, repr=False)

    @property
    def t(self) -> int:
        return self.config.t

    def representatives(self) -> np.ndarray:
        return self.config.uppers()

    def total(self) -> int:
        return int(sum(self.sizes))

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "zeta": cfg.zeta,
            "eps": cfg.eps,
            "t": cfg.t,
            "t0": cfg.t0,
            "m": cfg.m,
            "n": cfg.n,
            "sizes": [int(s) for s in self.sizes],
            "source_levels": list(self.source_levels),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, **config_kwargs) -> LevelSetSizes:
        cfg = LevelSetConfig(eps=data["eps"], m=data["m"], n=data["n"], zeta=data["zeta"], **config_kwargs)
        if cfg.t != data["t"] or len(data["sizes"]) != cfg.t:
            raise ValueError("serialized level sets do not match the reconstructed partition")
        cfg.t0 = data["t0"]
        return cls(list(data["sizes"]), list(data["source_levels"]), cfg)

    @classmethod
    def from_json(cls, text: str, **config_kwargs) -> LevelSetSizes:
        return cls.from_dict(json.loads(text), **config_kwargs)


def estimate_level_sizes(
    stack,
    cfg: LevelSetConfig,
    theta: float | None = None,
    *,
    tail_norms=None,
    hh_k: int | None = None,
    max_heavy: int | None = None,
    decoder: str = "threshold",
    min_agreement: int | None = None,
    noise_mult: float = 3.0,
) -> LevelSetSizes:
    """Estimate every band size from a populated subsampled stack.

    ``decoder="threshold"`` reads each level's heavy hitters off the
    Count-Sketch directly: ``theta`` defaults to ``(eps / log n)^(c + 4)`` and
    the cutoff is ``0.9 * theta * tail``, where ``tail`` is
    ``tail_norms[level]`` when given and otherwise the table's own estimate of
    its residual norm after the top ``hh_k`` buckets (default
    ``buckets // 4``).

    ``decoder="peel"`` decodes levels from the deepest up with
    :meth:`CountSketchTable.peel`, handing every coordinate recovered at one
    level to the next shallower one, where it is also present. This stays
    reliable when a level holds more heavy coordinates than a single point
    query can separate. ``min_agreement`` defaults to ``rows - 1`` (at least
    a majority).

    ``max_heavy`` caps how many heavy hitters each level keeps, largest first.
    """
    if decoder not in ("threshold", "peel"):
        raise ValueError(f"unknown decoder {decoder!r}")
    if theta is None:
        theta = cfg.default_theta()
    if hh_k is None:
        hh_k = max(1, stack.buckets // 4)
    survivors = np.zeros((stack.num_levels, cfg.t), dtype=np.int64)
    reports = {}
    if decoder == "peel":
        need = min_agreement if min_agreement is not None else max(stack.rows // 2 + 1, stack.rows - 1)
        known_idx = np.zeros(0, dtype=np.int64)
        known_val = np.zeros(0, dtype=np.int64)
        for ell in range(stack.num_levels - 1, -1, -1):
            candidates = stack.observed(ell)
            if candidates.size == 0:
                continue
            report = stack.tables[ell].peel(
                candidates, min_agreement=need, noise_mult=noise_mult,
                known_indices=known_idx, known_values=known_val,
            )
            reports[ell] = report
            known_idx, known_val = report.indices, report.estimates
    else:
        for ell, table in enumerate(stack.tables):
            candidates = stack.observed(ell)
            if candidates.size == 0:
                break
            hint = tail_norms[ell] if tail_norms is not None else table.residual_norm(hh_k)
            reports[ell] = table.heavy_hitters(theta, hh_k, hint, candidates)
    for ell, report in reports.items():
        mags = np.abs(report.estimates)
        if max_heavy is not None and mags.size > max_heavy:
            mags = np.sort(mags)[::-1][:max_heavy]
        if mags.size:
            survivors[ell] = np.bincount(level_indices(mags, cfg), minlength=cfg.t)

    exact0 = 0 in reports and reports[0].exact
    sizes: list[int] = []
    sources: list[int | str] = []
    for j in range(cfg.t):
        if j <= cfg.t0:
            sizes.append(int(survivors[0, j]))
            sources.append(DIRECT)
            continue
        qualifying = np.nonzero(survivors[:, j] >= cfg.z)[0]
        if qualifying.size:
            ell = int(qualifying[-1])
            sizes.append(int(survivors[ell, j]) << ell)
            sources.append(ell)
        elif exact0 and survivors[0, j]:
            # level 0 decoded without residual, so its count is exact
            sizes.append(int(survivors[0, j]))
            sources.append(0)
        else:
            sizes.append(0)
            sources.append(NONE)
    return LevelSetSizes(sizes, sources, cfg, survivors)


def exact_level_sizes(x, cfg: LevelSetConfig) -> list[int]:
    """True band sizes of an exact vector (test and diagnostic use)."""
    mags = np.array([abs(v) for v in x.entries.values()], dtype=np.float64)
    if mags.size == 0:
        return [0] * cfg.t
    return np.bincount(level_indices(mags, cfg), minlength=cfg.t).tolist()


def contributes(j: int, x, k: int, cfg: LevelSetConfig, p=1, *, trimmed: bool = False) -> bool:
    """Whether band ``j`` holds at least an ``eps^2 / log m`` share of the target mass.

    The target is the top-``k`` moment, or for ``trimmed=True`` the trimmed
    moment plus ``k * |a_k|^p``.
    """
    from trimsketch import oracle

    members = [abs(v) for v in x.entries.values() if level_index(abs(v), cfg) == j]
    mass = sum(oracle.power(v, p) for v in members)
    if trimmed:
        a = x.sorted_magnitudes()
        a_k = a[k - 1] if 0 < k <= len(a) else 0
        target = oracle.exact_trimmed(x, k, p) + k * oracle.power(a_k, p)
    else:
        target = oracle.exact_top_k(x, k, p)
    share = Fraction(cfg.eps) ** 2 / Fraction(_log2(cfg.m))
    return Fraction(mass) >= share * Fraction(target)
