"""Domain types, the brute-force oracle and the entrywise reference algorithms.

Everything here favours obviousness over speed: the oracle evaluates the
per-triplet support indicator literally, and the two entrywise algorithms
are direct transcriptions of the pairwise and triplet loops. Every optimized
variant in :mod:`pald.blocked` and :mod:`pald.parallel` is checked against
these.

Indices are 0-based throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .errors import TieError, UnsupportedPolicyError, ValidationError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class ComparisonPolicy(enum.Enum):
    """How distance comparisons treat equality.

    ``STRICT`` uses ``<`` for focus membership and support, so tied points are
    dropped. ``INCLUSIVE_SPLIT`` uses ``<=`` for focus membership and splits a
    support tie ``d_xz == d_yz`` evenly between ``c_xz`` and ``c_yz``.
    """

    STRICT = "strict"
    INCLUSIVE_SPLIT = "split"

    @classmethod
    def parse(cls, value: "ComparisonPolicy | str") -> "ComparisonPolicy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "strict": cls.STRICT,
            "split": cls.INCLUSIVE_SPLIT,
            "inclusive": cls.INCLUSIVE_SPLIT,
            "inclusive-split": cls.INCLUSIVE_SPLIT,
            "inclusivesplit": cls.INCLUSIVE_SPLIT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown comparison policy {value!r}") from None

    @property
    def inclusive(self) -> bool:
        return self is ComparisonPolicy.INCLUSIVE_SPLIT


STRICT = ComparisonPolicy.STRICT
INCLUSIVE_SPLIT = ComparisonPolicy.INCLUSIVE_SPLIT


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Dense symmetric matrix of pairwise distances between distinct points.

    Construction validates every invariant exactly: zero diagonal, exact
    symmetry, finite entries, and strictly positive off-diagonal entries.
    Use :meth:`from_array` to symmetrize slightly asymmetric input first.
    The stored array is a read-only C-contiguous copy in float32 or float64.
    """

    values: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.dtype not in FLOAT_DTYPES:
            if not (np.issubdtype(arr.dtype, np.number) or arr.dtype == np.bool_):
                raise ValidationError(f"distance matrix must be numeric, got {arr.dtype}")
            arr = arr.astype(np.float64)
        arr = np.array(arr, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {arr.shape}")
        n = arr.shape[0]
        if n < 2:
            raise ValidationError(f"need at least 2 points, got {n}")
        if not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise ValidationError(f"non-finite distance at entry {bad}")
        if np.any(arr < 0):
            bad = tuple(int(i) for i in np.argwhere(arr < 0)[0])
            raise ValidationError(f"negative distance at entry {bad}")
        if np.any(np.diagonal(arr) != 0):
            i = int(np.flatnonzero(np.diagonal(arr) != 0)[0])
            raise ValidationError(f"nonzero self-distance at entry ({i}, {i})")
        asym = arr != arr.T
        if np.any(asym):
            i, j = (int(k) for k in np.argwhere(asym)[0])
            raise ValidationError(
                f"distance matrix not symmetric at ({i}, {j}): {arr[i, j]!r} != {arr[j, i]!r}"
            )
        offdiag_zero = (arr == 0) & ~np.eye(n, dtype=bool)
        if np.any(offdiag_zero):
            i, j = (int(k) for k in np.argwhere(offdiag_zero)[0])
            raise ValidationError(
                f"zero distance between distinct points ({i}, {j}); duplicate points are not supported"
            )
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise ValidationError(f"expected {n} labels, got {len(labels)}")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", _readonly(arr))

    @classmethod
    def from_array(
        cls,
        values,
        *,
        rtol: float = 1e-9,
        labels: Sequence[str] | None = None,
        dtype=None,
    ) -> "DistanceMatrix":
        """Validate ``values`` after averaging away asymmetry within ``rtol``.

        Pairs whose relative difference exceeds ``rtol`` are rejected, naming
        the first offending entry. Self-distances must already be zero.
        """
        arr = np.asarray(values)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in FLOAT_DTYPES else np.float64
        arr = np.array(arr, dtype=dtype)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise ValidationError(f"non-finite distance at entry {bad}")
        diff = np.abs(arr - arr.T)
        scale = np.maximum(np.abs(arr), np.abs(arr.T))
        bad = diff > rtol * scale
        if np.any(bad):
            i, j = (int(k) for k in np.argwhere(bad)[0])
            raise ValidationError(
                f"distance matrix not symmetric at ({i}, {j}): {arr[i, j]!r} vs {arr[j, i]!r}"
            )
        sym = (arr + arr.T) / 2
        # averaging can still leave last-ulp asymmetry; mirror the upper triangle
        iu = np.triu_indices(arr.shape[0], 1)
        sym.T[iu] = sym[iu]
        return cls(sym.astype(dtype, copy=False), labels=labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def astype(self, dtype) -> "DistanceMatrix":
        if np.dtype(dtype) == self.dtype:
            return self
        return DistanceMatrix(self.values.astype(dtype), labels=self.labels)

    def __getitem__(self, key):
        return self.values[key]


def has_ties(D: DistanceMatrix) -> bool:
    """True if any point sees two other points at exactly the same distance.

    Every pair of distances within a triplet shares a point, so this is the
    same as asking whether some triplet contains an exact tie.
    """
    vals = np.sort(D.values, axis=1)[:, 1:]
    return bool(np.any(vals[:, 1:] == vals[:, :-1]))


@dataclass(frozen=True, eq=False)
class FocusSizeMatrix:
    """Symmetric integer matrix of local-focus sizes; the diagonal is 0."""

    sizes: np.ndarray

    def __post_init__(self):
        arr = np.array(self.sizes, dtype=np.int32, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"focus-size matrix must be square, got {arr.shape}")
        object.__setattr__(self, "sizes", _readonly(arr))

    @property
    def n(self) -> int:
        return self.sizes.shape[0]

    def check(self) -> None:
        """Raise ValidationError unless symmetry and 2 <= u_xy <= n hold."""
        u = self.sizes
        n = self.n
        if np.any(u != u.T):
            raise ValidationError("focus sizes not symmetric")
        off = ~np.eye(n, dtype=bool)
        if np.any(u[off] < 2) or np.any(u[off] > n):
            raise ValidationError("focus size outside [2, n]")
        if np.any(np.diagonal(u) != 0):
            raise ValidationError("focus-size diagonal must be 0")

    def reciprocals(self, dtype=np.float64) -> np.ndarray:
        """Off-diagonal 1/u_xy, zero on the diagonal."""
        u = self.sizes
        out = np.zeros(u.shape, dtype=dtype)
        np.divide(1, u, out=out, where=u != 0, casting="unsafe")
        return out


@dataclass(frozen=True, eq=False)
class CohesionMatrix:
    """Dense cohesion matrix ``c_xz`` (row x, column z). Not symmetric."""

    values: np.ndarray
    normalized: bool = False
    policy: ComparisonPolicy | None = None

    def __post_init__(self):
        arr = np.array(self.values, order="C", copy=True)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"cohesion matrix must be square, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("cohesion entries must be finite and nonnegative")
        if self.normalized:
            tol = 1e-4 if arr.dtype == np.float32 else 1e-9
            if arr.size and (arr.max() > 1 + tol or np.sum(arr, axis=1, dtype=np.float64).max() > 1 + tol):
                raise ValidationError("normalized cohesion rows must sum to at most 1")
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        return float(np.sum(self.values, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class LocalDepthVector:
    depths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "depths", _readonly(np.array(self.depths, dtype=np.float64)))

    def mean(self) -> float:
        return float(np.mean(self.depths))


class TripletContribution(NamedTuple):
    x: int
    y: int
    z: int
    value: float


def _check_index(n: int, *idx: int) -> None:
    for i in idx:
        if not 0 <= i < n:
            raise IndexError(f"point index {i} out of range for n={n}")


def _lt(a, b, inclusive: bool):
    return a <= b if inclusive else a < b


# ---------------------------------------------------------------------------
# Oracle


def focus_size(D: DistanceMatrix, x: int, y: int, policy=STRICT) -> int:
    """Number of points z with ``d_xz ⊲ d_xy`` or ``d_yz ⊲ d_xy``."""
    policy = ComparisonPolicy.parse(policy)
    _check_index(D.n, x, y)
    if x == y:
        raise ValidationError("focus size needs two distinct points")
    d = D.values
    dxy = d[x, y]
    member = _lt(d[x], dxy, policy.inclusive) | _lt(d[y], dxy, policy.inclusive)
    return int(np.count_nonzero(member))


def oracle_contribution(
    D: DistanceMatrix, x: int, y: int, z: int, u_xy: int, policy=INCLUSIVE_SPLIT
) -> TripletContribution:
    """Support ``g_xyz`` that z lends to x within the focus of (x, y).

    With ``INCLUSIVE_SPLIT`` both indicators use ``<=`` exactly as in the
    defining formula, so a support tie earns full credit here; the halving
    is applied by :func:`oracle_cohesion`. ``STRICT`` uses ``<``.
    """
    policy = ComparisonPolicy.parse(policy)
    _check_index(D.n, x, y, z)
    if x == y:
        raise ValidationError("x and y must differ")
    d = D.values
    inc = policy.inclusive
    hit = _lt(d[x, z], d[y, z], inc) and _lt(d[x, z], d[x, y], inc)
    return TripletContribution(x, y, z, (1.0 / u_xy) if hit else 0.0)


def oracle_cohesion(D: DistanceMatrix, policy=STRICT, *, normalized: bool = True) -> CohesionMatrix:
    """Cohesion by direct summation of ``g_xyz`` over every (x, y, z).

    Works in float64 regardless of the input dtype. Independent of every
    other code path in the package; used as the test oracle.
    """
    policy = ComparisonPolicy.parse(policy)
    inc = policy.inclusive
    d = D.values.astype(np.float64)
    n = D.n
    C = np.zeros((n, n))
    for x in range(n):
        dx = d[x]  # d_xz over z, and d_xy over y
        dxy = dx[:, None]  # rows indexed by y
        member = _lt(dx[None, :], dxy, inc) | _lt(d, dxy, inc)  # [y, z]
        u = member.sum(axis=1)
        g = (_lt(dx[None, :], d, inc) & _lt(dx[None, :], dxy, inc)).astype(np.float64)
        if inc:
            tie = dx[None, :] == d
            tie[:, x] = False
            tie[np.arange(n), np.arange(n)] = False  # z == y
            g[tie & (g > 0)] = 0.5
        u[x] = 1  # y == x is excluded below
        g /= u[:, None]
        g[x] = 0.0
        C[x] = g.sum(axis=0)
    if normalized:
        C /= n - 1
    return CohesionMatrix(C, normalized=normalized, policy=policy)


# ---------------------------------------------------------------------------
# Entrywise reference algorithms


@njit(nogil=True, cache=True)
def _pairwise_naive(D, U, C, inclusive):
    n = D.shape[0]
    for x in range(n - 1):
        for y in range(x + 1, n):
            dxy = D[x, y]
            u = 0
            if inclusive:
                for z in range(n):
                    if D[x, z] <= dxy or D[y, z] <= dxy:
                        u += 1
            else:
                for z in range(n):
                    if D[x, z] < dxy or D[y, z] < dxy:
                        u += 1
            U[x, y] = u
            U[y, x] = u
            w = C.dtype.type(1.0) / C.dtype.type(u)
            if inclusive:
                half = w * C.dtype.type(0.5)
                for z in range(n):
                    if D[x, z] <= dxy or D[y, z] <= dxy:
                        if D[x, z] < D[y, z]:
                            C[x, z] += w
                        elif D[x, z] == D[y, z]:
                            C[x, z] += half
                            C[y, z] += half
                        else:
                            C[y, z] += w
            else:
                for z in range(n):
                    if D[x, z] < dxy or D[y, z] < dxy:
                        if D[x, z] < D[y, z]:
                            C[x, z] += w
                        else:
                            C[y, z] += w


@njit(nogil=True, cache=True)
def _triplet_naive(D, U, R, C):
    n = D.shape[0]
    for x in range(n - 1):
        for y in range(x + 1, n):
            for z in range(y + 1, n):
                if D[x, y] < D[x, z] and D[x, y] < D[y, z]:
                    U[x, z] += 1
                    U[y, z] += 1
                elif D[x, z] < D[y, z]:
                    U[x, y] += 1
                    U[y, z] += 1
                else:
                    U[x, y] += 1
                    U[x, z] += 1
    one = C.dtype.type(1.0)
    for x in range(n - 1):
        for y in range(x + 1, n):
            R[x, y] = one / C.dtype.type(U[x, y])
    for x in range(n - 1):
        for y in range(x + 1, n):
            for z in range(y + 1, n):
                if D[x, y] < D[x, z] and D[x, y] < D[y, z]:
                    C[x, y] += R[x, z]
                    C[y, x] += R[y, z]
                elif D[x, z] < D[y, z]:
                    C[x, z] += R[x, y]
                    C[z, x] += R[y, z]
                else:
                    C[y, z] += R[x, y]
                    C[z, y] += R[x, z]


def _compute_dtype(D: DistanceMatrix, dtype) -> np.dtype:
    dt = D.dtype if dtype is None else np.dtype(dtype)
    if dt not in FLOAT_DTYPES:
        raise ValueError(f"unsupported compute dtype {dt}")
    return dt


def pairwise_entrywise(
    D: DistanceMatrix, policy=STRICT, *, dtype=None
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Unblocked pairwise algorithm with explicit branches.

    For each pair x < y, one pass over all z counts the focus, a second pass
    credits ``1/u_xy`` to ``c_xz`` or ``c_yz``. Returns unnormalized C.
    """
    policy = ComparisonPolicy.parse(policy)
    dt = _compute_dtype(D, dtype)
    d = D.values.astype(dt, copy=False)
    n = D.n
    U = np.zeros((n, n), dtype=np.int32)
    C = np.zeros((n, n), dtype=dt)
    _pairwise_naive(d, U, C, policy.inclusive)
    return FocusSizeMatrix(U), CohesionMatrix(C, normalized=False, policy=policy)


def require_strict(policy, algorithm: str = "triplet") -> None:
    if ComparisonPolicy.parse(policy) is not STRICT:
        raise UnsupportedPolicyError(
            f"the {algorithm} algorithm supports only the strict comparison policy"
        )


def check_no_ties(D: DistanceMatrix) -> None:
    if has_ties(D):
        d = D.values
        for x in range(D.n):
            row = np.delete(d[x], x)
            vals, counts = np.unique(row, return_counts=True)
            if np.any(counts > 1):
                v = vals[np.argmax(counts > 1)]
                y, z = (int(k) for k in np.flatnonzero(d[x] == v)[:2])
                raise TieError(
                    f"exact distance tie d[{x},{y}] == d[{x},{z}] == {v!r}; "
                    "use the pairwise algorithm with the split policy"
                )


def triplet_entrywise(
    D: DistanceMatrix, policy=STRICT, *, validate: bool = False, dtype=None
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Unblocked triplet algorithm; strict policy only.

    U starts at 2 off the diagonal and each triplet bumps the two pairs that
    are not its closest pair. The diagonal of the returned C is zero; see
    :func:`fill_diagonal`. ``validate=True`` rejects inputs with exact ties.
    """
    require_strict(policy)
    if validate:
        check_no_ties(D)
    dt = _compute_dtype(D, dtype)
    d = D.values.astype(dt, copy=False)
    n = D.n
    U = np.triu(np.full((n, n), 2, dtype=np.int32), 1)
    R = np.zeros((n, n), dtype=dt)
    C = np.zeros((n, n), dtype=dt)
    _triplet_naive(d, U, R, C)
    U = U + U.T
    return FocusSizeMatrix(U), CohesionMatrix(C, normalized=False, policy=STRICT)


def fill_diagonal(U: FocusSizeMatrix, C: CohesionMatrix) -> CohesionMatrix:
    """Set ``c_xx = sum_{y != x} 1/u_xy`` (scaled by 1/(n-1) if C is normalized)."""
    if U.n != C.n:
        raise ValueError(f"size mismatch: U is {U.n}, C is {C.n}")
    diag = U.reciprocals(np.float64).sum(axis=1)
    if C.normalized:
        diag /= C.n - 1
    vals = C.values.copy()
    np.fill_diagonal(vals, diag.astype(vals.dtype))
    return CohesionMatrix(vals, normalized=C.normalized, policy=C.policy)


def normalize(C: CohesionMatrix) -> CohesionMatrix:
    """Apply the 1/(n-1) factor that turns summed support into probability."""
    if C.normalized:
        raise ValidationError("cohesion matrix is already normalized")
    vals = C.values / C.values.dtype.type(C.n - 1)
    return CohesionMatrix(vals, normalized=True, policy=C.policy)


def local_depths(C: CohesionMatrix) -> LocalDepthVector:
    """Row sums of normalized cohesion."""
    if not C.normalized:
        raise ValidationError("local depths require a normalized cohesion matrix")
    return LocalDepthVector(C.values.sum(axis=1, dtype=np.float64))
