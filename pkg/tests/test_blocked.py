import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pald.blocked import (
    SWEEP_SIZES,
    BlockConfig,
    MaskTriple,
    autotune_blocks,
    block_ranges,
    block_triples,
    blocked_pairwise,
    blocked_triplet,
    default_blocks,
    padded_cols,
    pairwise_masks,
    triplet_masks,
)
from pald.core import INCLUSIVE_SPLIT, STRICT, pairwise_entrywise, triplet_entrywise
from pald.errors import TieError, UnsupportedPolicyError
from pald.ingest import random_distances
from pald.timing import PhaseTimer

from conftest import rel_close, tie_heavy

# -- masks ---------------------------------------------------------------------


def test_pairwise_masks_examples(D3):
    d = D3.values
    # pair (1,3), z = 2: in focus and supports x
    assert pairwise_masks(d[0, 2], d[0, 1], d[2, 1]) == MaskTriple(1.0, 1.0, 0.0)
    # pair (1,2), z = 3: outside the focus
    r, s, _ = pairwise_masks(d[0, 1], d[0, 2], d[1, 2])
    assert r == 0.0
    assert r * s == 0 and r * (1 - s) == 0


@given(dxy=st.floats(0.01, 100), dyz=st.floats(0.01, 100))
def test_pairwise_masks_z_is_x(dxy, dyz):
    r, s, _ = pairwise_masks(dxy, 0.0, dxy)
    assert (r, s) == (1.0, 1.0)


def test_pairwise_masks_split_tie():
    assert pairwise_masks(2.0, 1.0, 1.0, INCLUSIVE_SPLIT) == MaskTriple(1.0, 0.5, 0.0)
    assert pairwise_masks(1.0, 1.0, 3.0, INCLUSIVE_SPLIT).r == 1.0
    assert pairwise_masks(1.0, 1.0, 3.0, STRICT).r == 0.0


def test_triplet_masks_examples(D3):
    d = D3.values
    assert triplet_masks(d[0, 1], d[0, 2], d[1, 2]) == MaskTriple(1.0, 0.0, 0.0)
    assert triplet_masks(3.0, 1.0, 2.0) == MaskTriple(0.0, 1.0, 0.0)
    assert triplet_masks(3.0, 2.0, 1.0) == MaskTriple(0.0, 0.0, 1.0)


@given(st.lists(st.floats(0.001, 1e6), min_size=3, max_size=3, unique=True))
def test_triplet_masks_one_hot(ds):
    m = triplet_masks(*ds)
    assert sorted(m) == [0.0, 0.0, 1.0]
    closest = int(np.argmin(ds))
    assert m[closest] == 1.0  # r: xy, s: xz, t: yz


# -- enumeration -------------------------------------------------------------------


@pytest.mark.parametrize("n,b", [(10, 3), (16, 4), (5, 8), (7, 1)])
def test_block_ranges_cover(n, b):
    r = block_ranges(n, b)
    assert r[0][0] == 0 and r[-1][1] == n
    assert all(a[1] == c[0] for a, c in zip(r, r[1:]))
    assert all(0 < hi - lo <= b for lo, hi in r)


@pytest.mark.parametrize("nb", [1, 2, 4, 7])
def test_block_triple_count(nb):
    from math import comb

    assert len(list(block_triples(nb))) == comb(nb + 2, 3)


@pytest.mark.parametrize("n", [2, 3, 63, 64, 100, 2048, 4096])
def test_padded_cols_breaks_power_of_two_strides(n):
    ld = padded_cols(n)
    assert ld >= n and ld % 16 == 0 and ld % 64 != 0


# -- equivalence grid ----------------------------------------------------------------

GRID_N = [2, 3, 4, 7, 16, 17, 33, 65]


def _bs(n):
    return sorted({b for b in (1, 2, 3, 5, 8, n - 1, n, n + 7) if b >= 1})


@pytest.mark.parametrize("n", GRID_N)
def test_blocked_pairwise_grid(n):
    D = random_distances(n, seed=n)
    U0, C0 = pairwise_entrywise(D)
    for b in _bs(n):
        U, C = blocked_pairwise(D, b)
        assert np.array_equal(U.sizes, U0.sizes), b
        assert rel_close(C.values, C0.values, 1e-12), b


@pytest.mark.parametrize("n", GRID_N)
def test_blocked_pairwise_split_grid(n):
    D = tie_heavy(n, seed=n) if n > 2 else random_distances(2)
    U0, C0 = pairwise_entrywise(D, INCLUSIVE_SPLIT)
    for b in _bs(n):
        U, C = blocked_pairwise(D, b, INCLUSIVE_SPLIT)
        assert np.array_equal(U.sizes, U0.sizes), b
        assert rel_close(C.values, C0.values, 1e-12), b


@pytest.mark.parametrize("n", GRID_N)
def test_blocked_triplet_grid(n):
    D = random_distances(n, seed=100 + n)
    U0, C0 = triplet_entrywise(D)
    bs = _bs(n)
    for bf, bc in zip(bs, reversed(bs)):
        U, C = blocked_triplet(D, bf, bc)
        assert np.array_equal(U.sizes, U0.sizes), (bf, bc)
        assert rel_close(C.values, C0.values, 1e-12), (bf, bc)


@pytest.mark.parametrize("n,bf,bc", [(3, 1, 1), (33, 8, 4), (16, 16, 16), (40, 3, 64)])
def test_blocked_triplet_examples(n, bf, bc):
    D = random_distances(n, seed=n)
    U0, C0 = triplet_entrywise(D)
    U, C = blocked_triplet(D, bf, bc)
    assert np.array_equal(U.sizes, U0.sizes)
    assert rel_close(C.values, C0.values, 1e-12)


def test_blocked_d3_degenerate_blocks(D3):
    U0, C0 = pairwise_entrywise(D3)
    U, C = blocked_pairwise(D3, 1)
    assert np.array_equal(U.sizes, U0.sizes) and np.array_equal(C.values, C0.values)
    Ut, Ct = triplet_entrywise(D3)
    U, C = blocked_triplet(D3, 1, 1)
    assert np.array_equal(U.sizes, Ut.sizes) and np.array_equal(C.values, Ct.values)


# -- masked == branchy -------------------------------------------------------------------


@pytest.mark.parametrize("n,b", [(17, 4), (40, 8), (64, 64)])
@pytest.mark.parametrize("policy", [STRICT, INCLUSIVE_SPLIT])
def test_pairwise_masked_equals_branchy_bitwise(n, b, policy):
    D = tie_heavy(n, seed=n) if policy is INCLUSIVE_SPLIT else random_distances(n, seed=n)
    U1, C1 = blocked_pairwise(D, b, policy, branch_free=True)
    U2, C2 = blocked_pairwise(D, b, policy, branch_free=False)
    assert np.array_equal(U1.sizes, U2.sizes)
    assert np.array_equal(C1.values, C2.values)


@pytest.mark.parametrize("n,bf,bc", [(17, 4, 4), (40, 8, 16), (64, 64, 64)])
def test_triplet_masked_equals_branchy_bitwise(n, bf, bc):
    D = random_distances(n, seed=n)
    U1, C1 = blocked_triplet(D, bf, bc, branch_free=True, reassociate=False)
    U2, C2 = blocked_triplet(D, bf, bc, branch_free=False)
    assert np.array_equal(U1.sizes, U2.sizes)
    assert np.array_equal(C1.values, C2.values)
    # the reassociating production kernel only reorders two row sums
    U3, C3 = blocked_triplet(D, bf, bc)
    assert rel_close(C3.values, C2.values, 1e-12)


# -- misc -----------------------------------------------------------------------------


def test_blocked_triplet_policy_and_ties(T3):
    with pytest.raises(UnsupportedPolicyError):
        blocked_triplet(T3, 2, 2, INCLUSIVE_SPLIT)
    with pytest.raises(TieError):
        blocked_triplet(T3, 2, 2, validate=True)


def test_blocked_float32_close_to_float64():
    D = random_distances(50, seed=9)
    _, C64 = blocked_pairwise(D, 8)
    _, C32 = blocked_pairwise(D, 8, dtype=np.float32)
    assert C32.values.dtype == np.float32
    np.testing.assert_allclose(C32.values, C64.values, rtol=1e-5, atol=1e-7)
    _, T32 = blocked_triplet(D, 8, 8, dtype=np.float32)
    _, T64 = blocked_triplet(D, 8, 8)
    np.testing.assert_allclose(T32.values, T64.values, rtol=1e-5, atol=1e-7)


def test_phase_timer_records_all_phases():
    t = PhaseTimer()
    blocked_triplet(random_distances(40, seed=1), 8, 8, timer=t)
    t.stop()
    assert set(t.seconds) == {"focus", "cohesion", "memory"}
    assert sum(t.seconds.values()) <= t.total


@pytest.mark.parametrize(
    "cache,itemsize,expected",
    [
        (2 << 20, 4, BlockConfig(256, 128, 128)),  # M = 262144 words
        (8 << 20, 8, BlockConfig(512, 256, 128)),  # M = 524288 words
        (32 << 10, 4, BlockConfig(32, 32, 32)),  # clamped from below
        (1 << 34, 4, BlockConfig(1024, 1024, 1024)),  # clamped from above
    ],
)
def test_default_blocks_from_cache_bound(cache, itemsize, expected):
    assert default_blocks(itemsize, cache) == expected


def test_default_blocks_satisfy_bound():
    cache = 3 << 20
    cfg = default_blocks(4, cache)
    M = cache / 2 / 4
    assert 2 * cfg.b**2 <= M < 2 * (2 * cfg.b) ** 2
    assert 6 * cfg.b_focus**2 <= M and 12 * cfg.b_cohesion**2 <= M


@pytest.mark.parametrize("variant", ["pairwise", "triplet"])
def test_autotune_returns_sweep_member(variant):
    cfg = autotune_blocks(48, variant, 1)
    for b in (cfg.b, cfg.b_focus, cfg.b_cohesion):
        assert b in SWEEP_SIZES


def test_autotune_tie_break_prefers_larger(monkeypatch):
    import pald.blocked as blk

    monkeypatch.setattr(blk.time, "perf_counter", lambda: 0.0)  # every size takes 0 s
    assert autotune_blocks(40, "pairwise", 2, sizes=(32, 64)).b == 64


def test_block_config_validation():
    with pytest.raises(ValueError):
        BlockConfig(b=0)
