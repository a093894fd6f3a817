"""Glue from a stream to level-set sizes under one named configuration."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from trimsketch.hashing import SketchSeed
from trimsketch.levelset import LevelSetConfig, LevelSetSizes, estimate_level_sizes
from trimsketch.subsample import SubsampledSketchStack


@dataclass(frozen=True)
class SketchConfig:
    """Shape of the subsampled stack plus the level-set constants.

    ``levels=None`` keeps the default ``ceil(log2 n) + 1`` tables. ``m`` is
    given headroom of ``headroom`` times the stream's magnitude bound,
    because the random shift can put the top boundary below ``m`` itself.
    """

    rows: int = 5
    buckets: int = 1024
    levels: int | None = None
    eps: float = 0.1
    K: float = 4.0
    C_z: float = 0.01
    c: float = 1.0
    decoder: str = "peel"
    noise_mult: float = 3.0
    min_agreement: int | None = None
    headroom: int = 2

    def with_(self, **changes) -> SketchConfig:
        return replace(self, **changes)

    @classmethod
    def from_budget(cls, budget: int, levels: int, rows: int = 5, **kw) -> SketchConfig:
        cells = levels * rows
        if budget < cells:
            raise ValueError(f"budget {budget} is too small for {levels} levels x {rows} rows")
        return cls(rows=rows, buckets=budget // cells, levels=levels, **kw)


def build_stack(indices, deltas, n: int, cfg: SketchConfig, seed: int) -> SubsampledSketchStack:
    max_level = None if cfg.levels is None else cfg.levels - 1
    stack = SubsampledSketchStack(cfg.rows, cfg.buckets, max(n, 1), seed=SketchSeed(seed), max_level=max_level)
    stack.update_many(np.asarray(indices, dtype=np.int64), np.asarray(deltas, dtype=np.int64))
    return stack


def level_config(cfg: SketchConfig, m: int, n: int, seed: int, eps: float | None = None) -> LevelSetConfig:
    return LevelSetConfig(
        eps=cfg.eps if eps is None else eps, m=cfg.headroom * max(m, 1), n=max(n, 1),
        seed=seed, K=cfg.K, C_z=cfg.C_z, c=cfg.c,
    )


def level_sizes(stack: SubsampledSketchStack, cfg: SketchConfig, m: int, seed: int, eps: float | None = None) -> LevelSetSizes:
    lcfg = level_config(cfg, m, stack.n, seed, eps)
    return estimate_level_sizes(
        stack, lcfg, decoder=cfg.decoder, noise_mult=cfg.noise_mult, min_agreement=cfg.min_agreement,
    )


def sketch_sizes(indices, deltas, n: int, m: int, cfg: SketchConfig, seed: int, eps: float | None = None) -> LevelSetSizes:
    """Sketch a stream and estimate its level-set sizes in one call."""
    return level_sizes(build_stack(indices, deltas, n, cfg, seed), cfg, m, seed, eps)
