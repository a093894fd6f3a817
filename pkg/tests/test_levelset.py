import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trimsketch.hashing import SketchSeed
from trimsketch.levelset import (
    DIRECT,
    NONE,
    LevelSetConfig,
    LevelSetSizes,
    contributes,
    estimate_level_sizes,
    exact_level_sizes,
    level_index,
    level_indices,
)
from trimsketch.oracle import ExactVector
from trimsketch.pipeline import SketchConfig
from trimsketch.subsample import SubsampledSketchStack

from conftest import sketch_dense


def stack_of(x, rows=5, buckets=256, seed=0, max_level=None):
    x = np.asarray(x, dtype=np.int64)
    s = SubsampledSketchStack(rows, buckets, len(x), SketchSeed(seed), max_level)
    idx = np.nonzero(x)[0]
    s.update_many(idx, x[idx])
    return s


def test_hand_evaluated_partition():
    cfg = LevelSetConfig(eps=1, m=8, n=16, zeta=1.0)
    assert cfg.t == 4
    assert [cfg.upper(j) for j in range(4)] == [16, 8, 4, 2]
    assert [cfg.lower(j) for j in range(4)] == [8, 4, 2, 1]
    assert level_index(5, cfg) == 1


def test_right_open_boundary():
    cfg = LevelSetConfig(eps=0.3, m=1000, n=100, seed=7)
    assert level_index(cfg.zeta * 1.3 ** (cfg.t - 1), cfg) == 0
    assert level_index(cfg.lower(3), cfg) == 3


def test_nonpositive_magnitude_rejected():
    cfg = LevelSetConfig(eps=0.5, m=10, n=10)
    with pytest.raises(ValueError):
        level_index(0, cfg)


@pytest.mark.parametrize("kw", [dict(eps=0), dict(eps=1.5), dict(m=0), dict(n=0), dict(zeta=0.4)])
def test_config_validation(kw):
    base = dict(eps=0.5, m=10, n=10)
    base.update(kw)
    with pytest.raises(ValueError):
        LevelSetConfig(**base)


@given(st.floats(0.01, 1), st.integers(1, 10**9), st.integers(1, 10**9), st.integers(0, 2**64 - 1))
def test_config_invariants(eps, m, n, seed):
    cfg = LevelSetConfig(eps=eps, m=m, n=n, seed=seed)
    assert cfg.t >= 1 and 0 <= cfg.t0 <= cfg.t
    assert 0.5 <= cfg.zeta <= 1
    assert cfg.t == math.floor(math.log(m) / math.log(1 + eps) + 1e-9) + 1 or (1 + eps) ** (cfg.t - 1) <= m < (1 + eps) ** cfg.t


def test_each_magnitude_claimed_once():
    cfg = LevelSetConfig(eps=0.2, m=10**6, n=10, seed=3)
    rng = np.random.default_rng(0)
    vals = rng.uniform(1, 10**6, 10**4)
    js = level_indices(vals, cfg)
    lo = np.array([cfg.lower(j) for j in js])
    hi = np.array([cfg.upper(j) for j in js])
    inside = (lo <= vals) & (vals < hi)
    # values below zeta fall in the last band, values past the top boundary in the first
    assert np.all(inside | ((js == cfg.t - 1) & (vals < cfg.zeta)) | ((js == 0) & (vals >= cfg.upper(0))))


@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=200), st.integers(0, 2**32))
def test_partition_totality(vals, seed):
    x = ExactVector.from_dense(vals)
    cfg = LevelSetConfig(eps=0.25, m=10**6, n=len(vals), seed=seed)
    assert sum(exact_level_sizes(x, cfg)) == x.nnz


def test_zero_vector_all_zero():
    s = stack_of([0] * 100)
    sizes = estimate_level_sizes(s, LevelSetConfig(eps=0.25, m=100, n=100), decoder="peel")
    assert sizes.total() == 0


def test_five_top_coordinates_counted_directly():
    ok = 0
    for seed in range(40):
        x = np.zeros(1000, dtype=np.int64)
        x[np.random.default_rng(seed).choice(1000, 5, replace=False)] = 1000
        sizes = estimate_level_sizes(stack_of(x, seed=seed), LevelSetConfig(eps=0.25, m=1000, n=1000, seed=seed))
        j = level_index(1000, sizes.config)
        ok += sizes.sizes[j] == 5 and sizes.source_levels[j] == DIRECT and sizes.total() == 5
    assert ok >= 38


def test_planted_midrange_set():
    # 10^5 coordinates at 500 in a universe of 2*10^5 with a light tail of ones;
    # K = 0 keeps the set out of the directly counted top, and C_z = 0.2 gives
    # a quorum near 57 so a rescaled count sits within 25%
    n, s = 200_000, 100_000
    good = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = np.ones(n, dtype=np.int64)
        x[rng.permutation(n)[:s]] = 500
        sizes = sketch_dense(x, SketchConfig(buckets=1024, K=0, C_z=0.2), seed, 1000, eps=0.25)
        j = level_index(500, sizes.config)
        good += abs(sizes.sizes[j] - s) <= 0.25 * s
    assert good >= 9


def test_exact_regime_sizes():
    cfg = LevelSetConfig(eps=1, m=8, n=4, zeta=1.0)
    sizes = estimate_level_sizes(stack_of([8, 8, 8, 8], buckets=64), cfg, decoder="peel")
    assert sizes.sizes == [4, 0, 0, 0]
    assert sizes.source_levels[0] == DIRECT


@pytest.mark.parametrize("decoder", ["peel", "threshold"])
@pytest.mark.parametrize("seed", range(6))
def test_source_level_invariants(decoder, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(1, 50, 20_000)
    x[rng.choice(20_000, 30, replace=False)] = rng.integers(10**4, 10**5, 30)
    cfg = LevelSetConfig(eps=0.25, m=2 * 10**5, n=20_000, seed=seed, K=1, C_z=0.05)
    sizes = estimate_level_sizes(stack_of(x, seed=seed, buckets=512), cfg, decoder=decoder)
    surv = sizes.survivors
    for j, (s, src) in enumerate(zip(sizes.sizes, sizes.source_levels)):
        if src == NONE:
            assert s == 0
        elif src == DIRECT:
            assert j <= cfg.t0 and s == surv[0, j]
        else:
            assert s % (1 << src) == 0
            # no deeper level reached the quorum
            assert all(surv[ell, j] < cfg.z for ell in range(src + 1, surv.shape[0]))
            # level 0 without the quorum only when it decoded exactly
            assert surv[src, j] >= cfg.z or src == 0


def test_unknown_decoder():
    with pytest.raises(ValueError):
        estimate_level_sizes(stack_of([1, 2]), LevelSetConfig(eps=0.5, m=4, n=2), decoder="magic")


def test_overestimate_cap_statistical():
    # band sizes rarely exceed (1 + eps) times the truth
    eps, over, total = 0.25, 0, 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.integers(1, 100, 50_000)
        x[rng.choice(50_000, 50, replace=False)] = rng.integers(10**4, 10**5, 50)
        sizes = sketch_dense(x, SketchConfig(buckets=1024, C_z=0.2), seed, 10**5, eps=eps)
        truth = exact_level_sizes(ExactVector.from_dense(x.tolist()), sizes.config)
        for s, s_true in zip(sizes.sizes, truth):
            if s_true or s:
                total += 1
                over += s > (1 + eps) * s_true
    assert over <= 0.1 * total


def test_zeta_rarely_near_boundary():
    # fraction of (seed, magnitude) pairs within relative distance (eps/log n)^2 of a boundary
    eps, n = 0.25, 10**5
    gap = (eps / math.log2(n)) ** 2
    near = 0
    for seed in range(200):
        cfg = LevelSetConfig(eps=eps, m=10**5, n=n, seed=seed)
        for v in (37, 500, 12_345, 70_000):
            rel = np.abs(cfg.powers / v - 1)
            near += bool(np.any(rel <= gap))
    assert near <= 0.03 * 800


def test_contributes_examples():
    x = ExactVector.from_dense([10**6] * 10 + [1] * 10**4)
    cfg = LevelSetConfig(eps=0.1, m=10**6, n=x.n, zeta=1.0)
    j_big, j_one = level_index(10**6, cfg), level_index(1, cfg)
    assert contributes(j_big, x, 10, cfg, p=1)
    # 10^4 / 10^7 = 10^-3 against eps^2 / log2 m ~ 5e-4
    assert contributes(j_one, x, 10, cfg, p=1)
    empty = next(j for j in range(cfg.t) if j not in (j_big, j_one))
    assert not contributes(empty, x, 10, cfg, p=1)
    only = ExactVector.from_dense([7, 7, 7])
    cfg2 = LevelSetConfig(eps=0.5, m=8, n=3, zeta=1.0)
    assert contributes(level_index(7, cfg2), only, 2, cfg2, p=2)
    assert contributes(level_index(7, cfg2), only, 1, cfg2, p=1, trimmed=True)


def test_sizes_json_roundtrip():
    x = np.arange(1, 200)
    sizes = sketch_dense(x, SketchConfig(buckets=256), 3, 200)
    data = sizes.to_dict()
    assert set(data) >= {"zeta", "eps", "t", "t0", "sizes", "source_levels"}
    back = LevelSetSizes.from_json(sizes.to_json())
    assert back.sizes == sizes.sizes and back.source_levels == sizes.source_levels
    assert back.config.zeta == sizes.config.zeta
