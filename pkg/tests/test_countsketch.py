import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trimsketch.countsketch import CountSketchTable, SketchMergeError
from trimsketch.hashing import SketchSeed

N = 64
updates = st.lists(st.tuples(st.integers(0, N - 1), st.integers(-1000, 1000)), max_size=60)
shapes = st.tuples(st.integers(1, 6), st.integers(1, 32), st.integers(0, 2**64 - 1))


def fed(rows, buckets, seed, ups, n=N):
    t = CountSketchTable(rows, buckets, n, SketchSeed(seed))
    if ups:
        idx, dl = zip(*ups)
        t.update_many(list(idx), list(dl))
    return t


# -- worked examples -----------------------------------------------------

def test_single_bucket_single_item():
    t = CountSketchTable(1, 1, 10)
    t.update(3, 5)
    assert t.estimate(3) == 5


def test_insert_then_delete_cancels():
    t = CountSketchTable(5, 16, 10, SketchSeed(7))
    t.update(3, 5)
    t.update(3, -5)
    assert t.is_zero()


def test_collision_free_seed_gives_exact_estimate():
    # brute-force a seed where coordinates 1 and 2 never share a bucket
    for s in range(1000):
        t = CountSketchTable(5, 8, 10, SketchSeed(s))
        if all(t.bucket_of(r, [1])[0] != t.bucket_of(r, [2])[0] for r in range(5)):
            break
    else:
        pytest.fail("no collision-free seed found")
    t.update(1, 10)
    t.update(2, 1)
    assert t.estimate(1) == 10


def test_empty_table_estimates_zero():
    t = CountSketchTable(4, 8, 100, SketchSeed(3))
    assert np.all(t.estimate_many(np.arange(100)) == 0)


@pytest.mark.parametrize("rows,buckets", [(1, 1), (2, 3), (5, 8), (6, 64)])
def test_lone_coordinate_is_exact(rows, buckets):
    t = CountSketchTable(rows, buckets, 50, SketchSeed(rows * 100 + buckets))
    t.update(17, 7)
    assert t.estimate(17) == 7


def test_even_rows_take_lower_middle():
    t = CountSketchTable(4, 1, 5)
    t.counters[:] = np.array([[4], [1], [3], [2]])
    signs = [int(t.sign_of(r, [0])[0]) for r in range(4)]
    vals = sorted(signs[r] * int(t.counters[r, 0]) for r in range(4))
    assert t.estimate(0) == vals[1]


def test_point_estimate_tail_bound_monte_carlo():
    # x = (100, 1, 1, 1): ||x_{-1}||_2 = sqrt(3)
    bound = 3 * math.sqrt(3) / math.sqrt(8)
    good = 0
    for s in range(1000):
        t = CountSketchTable(5, 8, 4, SketchSeed(s))
        t.update_many([0, 1, 2, 3], [100, 1, 1, 1])
        good += abs(t.estimate(0) - 100) <= bound
    assert good >= 990


def test_heavy_hitter_found_monte_carlo():
    x = [1000, 1, 1, 1, 1]
    hit = 0
    for s in range(500):
        t = CountSketchTable(5, 16, 5, SketchSeed(s))
        t.update_many(range(5), x)
        rep = t.heavy_hitters(0.5, 1, 2.0)
        hit += 0 in rep and abs(dict(rep.entries)[0] - 1000) <= 4
    assert hit >= 475


def test_light_items_below_threshold_not_reported():
    # with theta = 1 the cutoff is 1.8, clear of the value-1 coordinates
    # unless two of them share a bucket in most rows
    clean = 0
    for s in range(500):
        t = CountSketchTable(5, 64, 5, SketchSeed(s))
        t.update_many(range(5), [1000, 1, 1, 1, 1])
        rep = t.heavy_hitters(1.0, 1, 2.0)
        clean += set(rep.indices.tolist()) == {0}
    assert clean >= 475


def test_heavy_hitters_zero_vector_empty():
    t = CountSketchTable(5, 16, 20, SketchSeed(1))
    assert len(t.heavy_hitters(0.5, 1, 0.0)) == 0


@pytest.mark.parametrize("theta", [0, -0.1, 1.5])
def test_heavy_hitters_theta_range(theta):
    with pytest.raises(ValueError):
        CountSketchTable(2, 4, 8).heavy_hitters(theta, 1, 1.0)


def test_report_estimates_are_point_estimates():
    rng = np.random.default_rng(0)
    t = CountSketchTable(5, 32, 200, SketchSeed(9))
    t.update_many(rng.integers(0, 200, 500), rng.integers(-50, 50, 500))
    rep = t.heavy_hitters(0.1, 4, t.residual_norm(4))
    assert len(set(rep.indices.tolist())) == len(rep)
    for i, e in rep.entries:
        assert 0 <= i < 200 and t.estimate(i) == e


# -- errors ----------------------------------------------------------------

def test_out_of_range_index_rejected():
    t = CountSketchTable(2, 4, 10)
    for bad in (-1, 10):
        with pytest.raises(IndexError):
            t.update(bad, 1)
        with pytest.raises(IndexError):
            t.update_many([0, bad], [1, 1])


def test_overflow_is_hard_error():
    # 3 * 2^61 doubled leaves the int64 range whatever the row sign
    big = 3 * 2**61
    t = CountSketchTable(1, 1, 4)
    t.update(0, big)
    with pytest.raises(OverflowError):
        t.update(0, big)
    with pytest.raises(OverflowError):
        t.update_many([0, 0], [big, big])
    assert int(t.counters[0, 0]) in (big, -big)


def test_merge_overflow_is_hard_error():
    a = CountSketchTable(1, 1, 4)
    a.update(0, 3 * 2**61)
    with pytest.raises(OverflowError):
        a.merge(a.copy())


def test_merge_shape_or_seed_mismatch():
    a = CountSketchTable(2, 4, 10, SketchSeed(1))
    for b in (CountSketchTable(2, 4, 10, SketchSeed(2)), CountSketchTable(3, 4, 10, SketchSeed(1)),
              CountSketchTable(2, 5, 10, SketchSeed(1)), CountSketchTable(2, 4, 11, SketchSeed(1))):
        with pytest.raises(SketchMergeError):
            a.merge(b)


# -- properties ------------------------------------------------------------

@given(shapes, updates, updates)
def test_merge_is_concatenation(shape, a, b):
    rows, buckets, seed = shape
    assert fed(rows, buckets, seed, a).merge(fed(rows, buckets, seed, b)) == fed(rows, buckets, seed, a + b)


@given(shapes, updates)
def test_merge_identity_and_inverse(shape, a):
    rows, buckets, seed = shape
    t = fed(rows, buckets, seed, a)
    assert t.merge(CountSketchTable(rows, buckets, N, SketchSeed(seed))) == t
    assert t.merge(-t).is_zero()


@given(shapes, updates, st.randoms(use_true_random=False))
def test_update_order_invariance(shape, a, rnd):
    rows, buckets, seed = shape
    b = list(a)
    rnd.shuffle(b)
    assert fed(rows, buckets, seed, a) == fed(rows, buckets, seed, b)


@given(shapes, updates)
def test_batch_matches_single_updates(shape, a):
    rows, buckets, seed = shape
    t = CountSketchTable(rows, buckets, N, SketchSeed(seed))
    for i, d in a:
        t.update(i, d)
    assert t == fed(rows, buckets, seed, a)


@given(shapes, updates)
def test_sign_symmetry(shape, a):
    rows, buckets, seed = shape
    pos = fed(rows, buckets, seed, a)
    neg = fed(rows, buckets, seed, [(i, -d) for i, d in a])
    assert np.array_equal(neg.counters, -pos.counters)
    if rows % 2:
        # the median commutes with negation only for an odd number of rows
        assert np.array_equal(neg.estimate_many(np.arange(N)), -pos.estimate_many(np.arange(N)))


@given(shapes, updates)
def test_counters_match_definition(shape, a):
    rows, buckets, seed = shape
    t = fed(rows, buckets, seed, a)
    x = np.zeros(N, dtype=np.int64)
    for i, d in a:
        x[i] += d
    for r in range(rows):
        expect = np.zeros(buckets, dtype=np.int64)
        np.add.at(expect, t.bucket_of(r, np.arange(N)), t.sign_of(r, np.arange(N)) * x)
        assert np.array_equal(t.counters[r], expect)


@given(shapes, updates)
def test_serialization_roundtrip(shape, a):
    rows, buckets, seed = shape
    t = fed(rows, buckets, seed, a)
    data = t.to_bytes()
    assert data[:4] == b"TSCS"
    back = CountSketchTable.from_bytes(data)
    assert back == t and back.to_bytes() == data


def test_serialization_rejects_garbage():
    data = CountSketchTable(2, 4, 8).to_bytes()
    for bad in (b"XXXX" + data[4:], data[:-1], data + b"\0"):
        with pytest.raises(ValueError):
            CountSketchTable.from_bytes(bad)


# -- peel decoder ----------------------------------------------------------

def test_peel_recovers_colliding_heavies():
    rng = np.random.default_rng(4)
    n = 4000
    x = rng.integers(1, 10, n)
    heavy = rng.choice(n, 80, replace=False)
    x[heavy] = rng.integers(5000, 9000, 80)
    t = CountSketchTable(5, 128, n, SketchSeed(4))
    t.update_many(np.arange(n), x)
    rep = t.peel(np.arange(n), min_agreement=4)
    got = dict(rep.entries)
    found = [i for i in heavy if i in got and abs(got[i] - x[i]) <= 200]
    assert len(found) >= 76
    assert sum(1 for i in got if x[i] < 100) <= 5


def test_peel_keeps_known_values():
    t = CountSketchTable(5, 64, 100, SketchSeed(2))
    t.update_many([3, 7, 9], [10_000, 20_000, 1])
    rep = t.peel(np.arange(100), min_agreement=4, known_indices=[3], known_values=[9_999])
    got = dict(rep.entries)
    assert got[3] == 9_999 and got[7] == 20_000


def test_peel_zero_table_reports_nothing():
    t = CountSketchTable(5, 16, 50, SketchSeed(0))
    t.update_many([1, 1, 2, 2], [5, -5, 3, -3])
    assert len(t.peel(np.arange(50), min_agreement=4)) == 0
