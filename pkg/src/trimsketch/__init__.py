"""Linear sketches for trimmed frequency statistics over turnstile streams."""

from trimsketch.countsketch import CountSketchTable, HeavyHitterReport
from trimsketch.estimators import (
    MomentQuery,
    QueryResult,
    configure_for_large_p,
    g_index,
    h_index_moment,
    sum_above_threshold,
    top_k_moment,
    trimmed_k_moment,
)
from trimsketch.hashing import SketchSeed
from trimsketch.levelset import (
    LevelSetConfig,
    LevelSetSizes,
    contributes,
    estimate_level_sizes,
    level_index,
)
from trimsketch.oracle import ExactVector
from trimsketch.subsample import LevelAssignment, SubsampledSketchStack

__all__ = [
    "CountSketchTable",
    "ExactVector",
    "HeavyHitterReport",
    "LevelAssignment",
    "LevelSetConfig",
    "LevelSetSizes",
    "MomentQuery",
    "QueryResult",
    "SketchSeed",
    "SubsampledSketchStack",
    "configure_for_large_p",
    "contributes",
    "estimate_level_sizes",
    "g_index",
    "h_index_moment",
    "level_index",
    "sum_above_threshold",
    "top_k_moment",
    "trimmed_k_moment",
]
