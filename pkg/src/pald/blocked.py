"""Cache-blocked, branch-free pairwise and triplet kernels.

Layout notes
------------
All matrices are dense row-major. Because D is symmetric, the column
``D[X, z]`` the pairwise algorithm streams is read as the row slice
``D[x, Z]``; the third-point loop is tiled into chunks of ``b`` so each
inner loop is a unit-stride sweep over a ``b``-wide tile of D and C.

The triplet cohesion pass writes six cohesion entries per triplet
``x < y < z``. Entries ``c_ab`` with ``a < b`` accumulate in ``A[a, b]`` and
entries ``c_ba`` accumulate transposed in ``B[a, b]``, so all six updates
run along rows in z. ``C = triu(A) + triu(B).T`` at the end.

Numba kernels take a tile's index bounds and update the output arrays in
place; the Python drivers own the block enumeration so the parallel module
can reuse the same kernels task by task.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from numba import njit

from .core import (
    STRICT,
    CohesionMatrix,
    ComparisonPolicy,
    DistanceMatrix,
    FocusSizeMatrix,
    _compute_dtype,
    check_no_ties,
    require_strict,
)
from .timing import PhaseTimer, null_timer

SWEEP_SIZES = (32, 64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class BlockConfig:
    """Block sizes: ``b`` for pairwise, ``b_focus``/``b_cohesion`` for the two triplet passes."""

    b: int = 128
    b_focus: int = 256
    b_cohesion: int = 128

    def __post_init__(self):
        for name in ("b", "b_focus", "b_cohesion"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")


class MaskTriple(NamedTuple):
    r: float
    s: float
    t: float = 0.0


# ---------------------------------------------------------------------------
# Masks. ``one``/``zero`` fix the result type so the same helper serves the
# integer focus pass and the floating-point cohesion pass.


@njit(nogil=True, cache=True, inline="always")
def _pair_mask_strict(dxy, dxz, dyz, one, zero):
    r = one if (dxz < dxy) | (dyz < dxy) else zero
    s = one if dxz < dyz else zero
    return r, s


@njit(nogil=True, cache=True, inline="always")
def _pair_mask_split(dxy, dxz, dyz, one, zero):
    r = one if (dxz <= dxy) | (dyz <= dxy) else zero
    half = one / (one + one)
    s = one if dxz < dyz else (half if dxz == dyz else zero)
    return r, s


@njit(nogil=True, cache=True, inline="always")
def _triplet_mask(dxy, dxz, dyz, one, zero):
    # r = [xy closest], s = (1 - r)[xz < yz], t = (1 - r)(1 - s), formed
    # with logic ops rather than multiplies
    rb = (dxy < dxz) & (dxy < dyz)
    sb = dxz < dyz
    r = one if rb else zero
    s = one if (not rb) & sb else zero
    t = one if not (rb | sb) else zero
    return r, s, t


def pairwise_masks(d_xy: float, d_xz: float, d_yz: float, policy=STRICT) -> MaskTriple:
    """Focus mask ``r`` and support mask ``s`` for third point z of pair (x, y).

    The cohesion updates are ``c_xz += r*s/u_xy`` and ``c_yz += r*(1-s)/u_xy``.
    Under the split policy ``s`` is 0.5 on a support tie.
    """
    policy = ComparisonPolicy.parse(policy)
    fn = _pair_mask_split if policy.inclusive else _pair_mask_strict
    r, s = fn(float(d_xy), float(d_xz), float(d_yz), 1.0, 0.0)
    return MaskTriple(r, s, 0.0)


def triplet_masks(d_xy: float, d_xz: float, d_yz: float) -> MaskTriple:
    """One-hot masks naming the closest pair of a triplet: xy, xz or yz."""
    return MaskTriple(*_triplet_mask(float(d_xy), float(d_xz), float(d_yz), 1.0, 0.0))


# ---------------------------------------------------------------------------
# Pairwise kernels


@njit(nogil=True, cache=True)
def _pairwise_focus_block(D, Ub, x0, x1, y0, y1, z0, z1, bz, inclusive):
    # Ub[x - x0, y - y0] += |{z in [z0, z1) : z in focus of (x, y)}|
    one = np.int32(1)
    zero = np.int32(0)
    for zt in range(z0, z1, bz):
        ze = min(zt + bz, z1)
        for x in range(x0, x1):
            dx = D[x, zt:ze]
            for y in range(max(y0, x + 1), y1):
                dy = D[y, zt:ze]
                dxy = D[x, y]
                cnt = zero
                if inclusive:
                    for k in range(dx.shape[0]):
                        r, s = _pair_mask_split(dxy, dx[k], dy[k], one, zero)
                        cnt += r
                else:
                    for k in range(dx.shape[0]):
                        r, s = _pair_mask_strict(dxy, dx[k], dy[k], one, zero)
                        cnt += r
                Ub[x - x0, y - y0] += cnt


@njit(nogil=True, cache=True)
def _pairwise_commit_block(Ub, U, W, x0, x1, y0, y1):
    # Store the finished focus block into U and its reciprocals into W.
    one = W.dtype.type(1)
    for x in range(x0, x1):
        for y in range(max(y0, x + 1), y1):
            u = Ub[x - x0, y - y0]
            U[x, y] = u
            U[y, x] = u
            W[x - x0, y - y0] = one / W.dtype.type(u)


@njit(nogil=True, cache=True)
def _pairwise_cohesion_block(D, C, W, x0, x1, y0, y1, z0, z1, bz, inclusive):
    one = W.dtype.type(1)
    zero = W.dtype.type(0)
    for zt in range(z0, z1, bz):
        ze = min(zt + bz, z1)
        for x in range(x0, x1):
            dx = D[x, zt:ze]
            cx = C[x, zt:ze]
            for y in range(max(y0, x + 1), y1):
                dy = D[y, zt:ze]
                cy = C[y, zt:ze]
                dxy = D[x, y]
                w = W[x - x0, y - y0]
                if inclusive:
                    for k in range(dx.shape[0]):
                        r, s = _pair_mask_split(dxy, dx[k], dy[k], one, zero)
                        cx[k] += r * s * w
                        cy[k] += r * (one - s) * w
                else:
                    for k in range(dx.shape[0]):
                        r, s = _pair_mask_strict(dxy, dx[k], dy[k], one, zero)
                        cx[k] += r * s * w
                        cy[k] += r * (one - s) * w


@njit(nogil=True, cache=True)
def _pairwise_cohesion_block_branchy(D, C, W, x0, x1, y0, y1, z0, z1, bz, inclusive):
    for zt in range(z0, z1, bz):
        ze = min(zt + bz, z1)
        for x in range(x0, x1):
            for y in range(max(y0, x + 1), y1):
                dxy = D[x, y]
                w = W[x - x0, y - y0]
                half = w * W.dtype.type(0.5)
                for z in range(zt, ze):
                    dxz = D[x, z]
                    dyz = D[y, z]
                    if inclusive:
                        if dxz <= dxy or dyz <= dxy:
                            if dxz < dyz:
                                C[x, z] += w
                            elif dxz == dyz:
                                C[x, z] += half
                                C[y, z] += half
                            else:
                                C[y, z] += w
                    elif dxz < dxy or dyz < dxy:
                        if dxz < dyz:
                            C[x, z] += w
                        else:
                            C[y, z] += w


# ---------------------------------------------------------------------------
# Triplet kernels. Loops cover x < y < z with x in X, y in Y, z in Z and
# X <= Y <= Z as blocks; the max(...) starts handle all three block-symmetry
# cases (X == Y == Z, X != Y == Z, X == Y != Z).


@njit(nogil=True, cache=True)
def _triplet_focus_block(D, U, x0, x1, y0, y1, z0, z1):
    one = np.int32(1)
    zero = np.int32(0)
    for x in range(x0, x1):
        for y in range(max(y0, x + 1), y1):
            zs = max(z0, y + 1)
            dx = D[x, zs:z1]
            dy = D[y, zs:z1]
            ux = U[x, zs:z1]
            uy = U[y, zs:z1]
            dxy = D[x, y]
            cnt = np.int32(0)
            for k in range(dx.shape[0]):
                # one-hot masks: s + t == 1 - r, r + t == 1 - s, r + s == 1 - t
                r, s, t = _triplet_mask(dxy, dx[k], dy[k], one, zero)
                cnt += one - r
                ux[k] += one - s
                uy[k] += one - t
            U[x, y] += cnt


@njit(nogil=True, cache=True)
def _triplet_focus_block_branchy(D, U, x0, x1, y0, y1, z0, z1):
    for x in range(x0, x1):
        for y in range(max(y0, x + 1), y1):
            dxy = D[x, y]
            for z in range(max(z0, y + 1), z1):
                if dxy < D[x, z] and dxy < D[y, z]:
                    U[x, z] += 1
                    U[y, z] += 1
                elif D[x, z] < D[y, z]:
                    U[x, y] += 1
                    U[y, z] += 1
                else:
                    U[x, y] += 1
                    U[x, z] += 1


def _triplet_cohesion_block_py(D, R, A, B, x0, x1, y0, y1, z0, z1):
    one = R.dtype.type(1)
    zero = R.dtype.type(0)
    for x in range(x0, x1):
        for y in range(max(y0, x + 1), y1):
            zs = max(z0, y + 1)
            dx = D[x, zs:z1]
            dy = D[y, zs:z1]
            rx = R[x, zs:z1]
            ry = R[y, zs:z1]
            ax = A[x, zs:z1]
            bx = B[x, zs:z1]
            ay = A[y, zs:z1]
            by = B[y, zs:z1]
            dxy = D[x, y]
            rxy = R[x, y]
            axy = zero
            bxy = zero
            for k in range(dx.shape[0]):
                r, s, t = _triplet_mask(dxy, dx[k], dy[k], one, zero)
                axy += r * rx[k]  # c_xy += r / u_xz
                bxy += r * ry[k]  # c_yx += r / u_yz
                ax[k] += s * rxy  # c_xz += s / u_xy
                bx[k] += s * ry[k]  # c_zx += s / u_yz
                ay[k] += t * rxy  # c_yz += t / u_xy
                by[k] += t * rx[k]  # c_zy += t / u_xz
            A[x, y] += axy
            B[x, y] += bxy


# The two row reductions (axy, bxy) only vectorize when reassociation is
# allowed. The ordered build keeps strict left-to-right summation so it can
# be compared bit-for-bit with the branchy kernel.
_triplet_cohesion_block = njit(nogil=True, cache=True, fastmath={"reassoc"})(
    _triplet_cohesion_block_py
)
_triplet_cohesion_block_ordered = njit(nogil=True)(_triplet_cohesion_block_py)


@njit(nogil=True, cache=True)
def _triplet_cohesion_block_branchy(D, R, A, B, x0, x1, y0, y1, z0, z1):
    zero = R.dtype.type(0)
    for x in range(x0, x1):
        for y in range(max(y0, x + 1), y1):
            dxy = D[x, y]
            rxy = R[x, y]
            axy = zero
            bxy = zero
            for z in range(max(z0, y + 1), z1):
                dxz = D[x, z]
                dyz = D[y, z]
                if dxy < dxz and dxy < dyz:
                    axy += R[x, z]
                    bxy += R[y, z]
                elif dxz < dyz:
                    A[x, z] += rxy
                    B[x, z] += R[y, z]
                else:
                    A[y, z] += rxy
                    B[y, z] += R[x, z]
            A[x, y] += axy
            B[x, y] += bxy


def triplet_kernels(branch_free: bool = True, reassociate: bool = True):
    """(focus kernel, cohesion kernel) for the requested code shape."""
    if not branch_free:
        return _triplet_focus_block_branchy, _triplet_cohesion_block_branchy
    if reassociate:
        return _triplet_focus_block, _triplet_cohesion_block
    return _triplet_focus_block, _triplet_cohesion_block_ordered


# ---------------------------------------------------------------------------
# Block enumeration


def block_ranges(n: int, b: int) -> list[tuple[int, int]]:
    """Half-open index ranges of width ``b``; the last one may be short."""
    if b < 1:
        raise ValueError(f"block size must be >= 1, got {b}")
    return [(s, min(s + b, n)) for s in range(0, n, b)]


def block_pairs(nb: int) -> Iterator[tuple[int, int]]:
    """Upper triangle of block pairs, diagonal included, in loop order."""
    for xb in range(nb):
        for yb in range(xb, nb):
            yield xb, yb


def block_triples(nb: int) -> Iterator[tuple[int, int, int]]:
    """Block triples ``xb <= yb <= zb`` in loop order; there are C(nb+2, 3)."""
    for xb in range(nb):
        for yb in range(xb, nb):
            for zb in range(yb, nb):
                yield xb, yb, zb


# ---------------------------------------------------------------------------
# Drivers


Z_TILE = 1024


def padded_cols(n: int) -> int:
    """Row stride (in elements) for the padded working arrays.

    A power-of-two row stride maps the same column of consecutive rows to
    the same cache sets, and the kernels stream 4 to 8 such rows at once.
    Rounding up to 16 and avoiding multiples of 64 breaks the aliasing.
    """
    ld = -(-n // 16) * 16
    if ld % 64 == 0:
        ld += 16
    return ld


def padded_zeros(n: int, dtype) -> np.ndarray:
    """(n, padded_cols(n)) zero array; kernels only touch the first n columns."""
    return np.zeros((n, padded_cols(n)), dtype=dtype)


def padded_copy(D: DistanceMatrix, dtype=None) -> np.ndarray:
    dt = _compute_dtype(D, dtype)
    d = padded_zeros(D.n, dt)
    d[:, : D.n] = D.values
    return d


def blocked_pairwise(
    D: DistanceMatrix,
    b: int | None = None,
    policy=STRICT,
    *,
    dtype=None,
    branch_free: bool = True,
    z_tile: int | None = None,
    timer: PhaseTimer | None = None,
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Blocked pairwise algorithm. Returns unnormalized C with its diagonal.

    Block pairs (X, Y) run over the upper block triangle. For each pair the
    focus block is counted over every third point, turned into reciprocals,
    and then every third point's support is credited, ``z_tile`` points at a
    time (default ``max(b, Z_TILE)``).
    """
    policy = ComparisonPolicy.parse(policy)
    timer = timer or null_timer()
    dt = _compute_dtype(D, dtype)
    b = default_blocks(dt.itemsize).b if b is None else int(b)
    n = D.n
    bz = max(b, Z_TILE) if z_tile is None else max(1, int(z_tile))
    with timer.phase("memory"):
        d = padded_copy(D, dt)
        U = np.zeros((n, n), dtype=np.int32)
        C = padded_zeros(n, dt)
        Ub = np.zeros((min(b, n), min(b, n)), dtype=np.int32)
        W = np.zeros(Ub.shape, dtype=dt)
    cohesion = _pairwise_cohesion_block if branch_free else _pairwise_cohesion_block_branchy
    inclusive = policy.inclusive
    ranges = block_ranges(n, b)
    for xb, yb in block_pairs(len(ranges)):
        (x0, x1), (y0, y1) = ranges[xb], ranges[yb]
        with timer.phase("focus"):
            Ub[:] = 0
            _pairwise_focus_block(d, Ub, x0, x1, y0, y1, 0, n, bz, inclusive)
        with timer.phase("cohesion"):
            _pairwise_commit_block(Ub, U, W, x0, x1, y0, y1)
            cohesion(d, C, W, x0, x1, y0, y1, 0, n, bz, inclusive)
    with timer.phase("memory"):
        result = FocusSizeMatrix(U), CohesionMatrix(C[:, :n], normalized=False, policy=policy)
    return result


def triplet_focus_init(n: int) -> np.ndarray:
    """Padded U with 2 on the strict upper triangle (x and y are always in focus)."""
    U = padded_zeros(n, np.int32)
    U[:, :n] = np.triu(np.full((n, n), 2, dtype=np.int32), 1)
    return U


def symmetrize_focus(U: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    sq = U[:, :n]
    sq += sq.T.copy()
    return U


def reciprocals(U: np.ndarray, dtype) -> np.ndarray:
    """Padded ``1/U`` off the diagonal, zero elsewhere."""
    n = U.shape[0]
    R = padded_zeros(n, dtype)
    np.divide(1, U[:, :n], out=R[:, :n], where=U[:, :n] != 0, casting="unsafe")
    return R


def assemble_triplet_cohesion(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    return np.triu(A[:, :n], 1) + np.triu(B[:, :n], 1).T


def blocked_triplet(
    D: DistanceMatrix,
    b_focus: int | None = None,
    b_cohesion: int | None = None,
    policy=STRICT,
    *,
    validate: bool = False,
    dtype=None,
    branch_free: bool = True,
    reassociate: bool = True,
    timer: PhaseTimer | None = None,
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Blocked triplet algorithm (strict policy only).

    Pass one enumerates block triples with ``b_focus`` and builds all of U;
    pass two re-enumerates with ``b_cohesion`` and performs the six masked
    cohesion updates per triplet. The diagonal of C is left zero.
    """
    require_strict(policy)
    if validate:
        check_no_ties(D)
    timer = timer or null_timer()
    dt = _compute_dtype(D, dtype)
    defaults = default_blocks(dt.itemsize)
    b_focus = defaults.b_focus if b_focus is None else int(b_focus)
    b_cohesion = defaults.b_cohesion if b_cohesion is None else int(b_cohesion)
    focus_kernel, cohesion_kernel = triplet_kernels(branch_free, reassociate)
    n = D.n
    with timer.phase("memory"):
        d = padded_copy(D, dt)
        U = triplet_focus_init(n)
    ranges = block_ranges(n, b_focus)
    with timer.phase("focus"):
        for xb, yb, zb in block_triples(len(ranges)):
            focus_kernel(d, U, *ranges[xb], *ranges[yb], *ranges[zb])
    with timer.phase("memory"):
        symmetrize_focus(U)
        A = padded_zeros(n, dt)
        B = padded_zeros(n, dt)
    ranges = block_ranges(n, b_cohesion)
    with timer.phase("cohesion"):
        R = reciprocals(U, dt)
        for xb, yb, zb in block_triples(len(ranges)):
            cohesion_kernel(d, R, A, B, *ranges[xb], *ranges[yb], *ranges[zb])
    with timer.phase("memory"):
        C = assemble_triplet_cohesion(A, B)
        result = FocusSizeMatrix(U[:, :n]), CohesionMatrix(C, normalized=False, policy=STRICT)
    return result


# ---------------------------------------------------------------------------
# Block-size selection


def detect_llc_bytes(default: int = 8 << 20) -> int:
    """Size of the largest CPU cache visible to this process, in bytes."""
    for name in ("SC_LEVEL3_CACHE_SIZE", "SC_LEVEL2_CACHE_SIZE"):
        try:
            v = os.sysconf(name)
        except (ValueError, OSError, AttributeError):
            continue
        if v and v > 0:
            return int(v)
    best = 0
    for idx in Path("/sys/devices/system/cpu/cpu0/cache").glob("index*"):
        try:
            text = (idx / "size").read_text().strip().upper()
        except OSError:
            continue
        mult = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}.get(text[-1:], 1)
        digits = text.rstrip("KMG")
        if digits.isdigit():
            best = max(best, int(digits) * mult)
    return best or default


def _pow2_floor(v: float) -> int:
    return 1 << max(0, int(math.floor(math.log2(max(v, 1.0)))))


def default_blocks(itemsize: int = 4, cache_bytes: int | None = None) -> BlockConfig:
    """Block sizes from the cache-capacity bounds, without timing anything.

    With M reals fitting in half the last-level cache, pairwise takes the
    largest power of two with ``2 b^2 <= M``; the triplet passes use
    ``6 b^2 <= M`` and ``12 b^2 <= M``. Results are clamped to the sweep
    range [32, 1024].
    """
    cache = detect_llc_bytes() if cache_bytes is None else cache_bytes
    m_words = cache / 2 / itemsize

    def pick(k):
        return min(max(_pow2_floor(math.sqrt(m_words / k)), SWEEP_SIZES[0]), SWEEP_SIZES[-1])

    return BlockConfig(b=pick(2), b_focus=pick(6), b_cohesion=pick(12))


def _sweep_candidates(n: int, sizes) -> list[int]:
    sizes = sorted(set(int(s) for s in sizes))
    keep = [s for s in sizes if s <= n]
    bigger = [s for s in sizes if s > n]
    if bigger:
        keep.append(bigger[0])  # one representative of "a single block"
    return keep


def autotune_blocks(
    n: int,
    variant: str = "pairwise",
    trial_budget: int = 1,
    *,
    sizes=SWEEP_SIZES,
    dtype=np.float32,
    seed: int = 0,
    report=None,
) -> BlockConfig:
    """Time each candidate block size on a random n-point input; keep the fastest.

    Triplet passes are timed separately (their block sizes are independent),
    so the sweep costs one run per candidate rather than one per pair.
    Equal mean times resolve toward the larger block. ``report`` is an
    optional callable receiving ``(variant, b, pass_name, mean_seconds)``.
    """
    from .ingest import random_distances

    if trial_budget < 1:
        raise ValueError("trial_budget must be >= 1")
    if variant not in ("pairwise", "triplet"):
        raise ValueError(f"unknown variant {variant!r}")
    D = random_distances(n, seed=seed, dtype=dtype)
    candidates = _sweep_candidates(n, sizes)
    base = default_blocks(np.dtype(dtype).itemsize)
    # warm-up compiles the kernels outside the timed region
    small = random_distances(min(n, 8), seed=seed, dtype=dtype)
    blocked_pairwise(small, 4) if variant == "pairwise" else blocked_triplet(small, 4, 4)

    def best(times: dict[int, float]) -> int:
        return min(times, key=lambda b: (times[b], -b))

    if variant == "pairwise":
        times = {}
        for b in candidates:
            total = 0.0
            for _ in range(trial_budget):
                t0 = time.perf_counter()
                blocked_pairwise(D, b)
                total += time.perf_counter() - t0
            times[b] = total / trial_budget
            if report:
                report(variant, b, "total", times[b])
        return BlockConfig(b=best(times), b_focus=base.b_focus, b_cohesion=base.b_cohesion)

    focus_times, cohesion_times = {}, {}
    for b in candidates:
        f = c = 0.0
        for _ in range(trial_budget):
            timer = PhaseTimer()
            blocked_triplet(D, b, b, timer=timer)
            f += timer.seconds["focus"]
            c += timer.seconds["cohesion"]
        focus_times[b] = f / trial_budget
        cohesion_times[b] = c / trial_budget
        if report:
            report(variant, b, "focus", focus_times[b])
            report(variant, b, "cohesion", cohesion_times[b])
    return BlockConfig(b=base.b, b_focus=best(focus_times), b_cohesion=best(cohesion_times))
