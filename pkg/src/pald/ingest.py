"""Readers and writers: distance CSV/binary, point clouds, SNAP edge lists.

Binary layout (little-endian)::

    b"PALD" | version u8 (=1) | width u8 (4 or 8) | n u64 | n*n row-major reals
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import pdist, squareform

from .core import CohesionMatrix, DistanceMatrix
from .errors import FormatError, ValidationError

MAGIC = b"PALD"
VERSION = 1
_HEADER = struct.Struct("<4sBBQ")


class DisconnectedGraphWarning(UserWarning):
    """Raised (as a warning) when vertices outside the largest component are dropped."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    coords: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.array(self.coords, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValidationError(f"points must be an n x d array with d >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("point coordinates must be finite")
        if self.labels is not None and len(self.labels) != arr.shape[0]:
            raise ValidationError("label count does not match point count")
        object.__setattr__(self, "coords", arr)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True, eq=False)
class EdgeList:
    """Undirected simple graph on dense ids ``0..n-1``; ``ids[k]`` is vertex k's original id."""

    edges: np.ndarray  # (m, 2) int64, u < v, unique
    ids: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    @classmethod
    def from_pairs(cls, pairs, ids=None) -> "EdgeList":
        """Clean raw (u, v) pairs: drop self-loops and duplicates, relabel densely."""
        raw = np.asarray(pairs).reshape(-1, 2)
        uniq, inv = np.unique(raw, return_inverse=True)
        e = inv.reshape(-1, 2).astype(np.int64)
        e = e[e[:, 0] != e[:, 1]]
        e = np.unique(np.sort(e, axis=1), axis=0)
        # vertices that only had self-loops are kept as isolated vertices
        return cls(e, uniq if ids is None else np.asarray(ids))


# ---------------------------------------------------------------------------
# text tables


def _parse_float(tok: str):
    try:
        return float(tok)
    except ValueError:
        return None


def _read_table(path, what: str):
    """Return (meta, header, labels, rows) from a '#'-commented delimited file.

    Comma-separated if the first data line has a comma, else whitespace.
    A first row with a non-numeric cell past the first column, or any first
    row when a ``# header: labels`` comment is present, is a header. A first column that
    is non-numeric on every data row is taken as row labels.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    meta: dict[str, str] = {}
    lines = []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        lines.append(s)
    if not lines:
        raise FormatError(f"{path}: no {what} data")
    if "," in lines[0]:
        rows = [[c.strip() for c in r] for r in csv.reader(io.StringIO("\n".join(lines)))]
    else:
        rows = [ln.split() for ln in lines]
    header = None
    declared = meta.get("header", "").lower() == "labels"
    if len(rows) > 1 and (declared or any(_parse_float(c) is None for c in rows[0][1:])):
        header, rows = rows[0], rows[1:]
    labels = None
    if rows and all(_parse_float(r[0]) is None for r in rows if r):
        labels = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
        if header is not None and len(header) == len(rows[0]) + 1:
            header = header[1:]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path}: ragged rows (widths {sorted(widths)})")
    vals = np.empty((len(rows), widths.pop()), dtype=np.float64)
    for i, r in enumerate(rows):
        for j, c in enumerate(r):
            v = _parse_float(c)
            if v is None:
                raise ValidationError(f"{path}: non-numeric entry {c!r} at row {i}, column {j}")
            vals[i, j] = v
    return meta, header, labels, vals


def read_distance_csv(path, *, rtol: float = 1e-9, dtype=np.float64) -> DistanceMatrix:
    """Read an n x n distance grid; near-symmetric input is averaged (see ``from_array``)."""
    meta, header, labels, vals = _read_table(path, "distance")
    if vals.shape[0] != vals.shape[1]:
        raise ValidationError(f"{path}: distance grid is not square ({vals.shape[0]}x{vals.shape[1]})")
    names = labels or header
    return DistanceMatrix.from_array(vals, rtol=rtol, labels=names, dtype=dtype)


def read_cohesion_csv(path) -> tuple[CohesionMatrix, dict[str, str], list[str] | None]:
    """Read a cohesion CSV written by :func:`write_matrix_csv`; returns (C, header metadata, labels)."""
    meta, header, labels, vals = _read_table(path, "cohesion")
    if vals.shape[0] != vals.shape[1]:
        raise ValidationError(f"{path}: cohesion grid is not square")
    normalized = meta.get("normalized", "").lower() in ("true", "yes", "1")
    return CohesionMatrix(vals, normalized=normalized), meta, labels or header


def write_matrix_csv(
    path, values, *, labels: Sequence[str] | None = None, meta: dict | None = None
) -> None:
    """Write a square matrix with 17 significant digits; ``meta`` goes to '# key: value' lines.

    ``path`` may also be an open text file.
    """
    if hasattr(path, "write"):
        _write_matrix_csv(path, values, labels, meta)
        return
    with open(path, "w", newline="") as fh:
        _write_matrix_csv(fh, values, labels, meta)


def _write_matrix_csv(fh, values, labels, meta) -> None:
    meta = dict(meta or {})
    if labels is not None:
        meta["header"] = "labels"  # labels may look numeric (graph vertex ids)
    for k, v in meta.items():
        fh.write(f"# {k}: {v}\n")
    w = csv.writer(fh, lineterminator="\n")
    if labels is not None:
        w.writerow(labels)
    for row in np.asarray(values):
        w.writerow([f"{float(v):.17g}" for v in row])


def write_vector_csv(path, values, *, name: str = "value", labels=None, meta=None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", name])
        for i, v in enumerate(np.asarray(values)):
            w.writerow([labels[i] if labels is not None else i, f"{float(v):.17g}"])


# ---------------------------------------------------------------------------
# binary


def write_binary(path, values, width: int | None = None) -> None:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"binary format stores square matrices, got {arr.shape}")
    width = width or (4 if arr.dtype == np.float32 else 8)
    if width not in (4, 8):
        raise FormatError(f"unsupported element width {width}")
    dt = np.dtype("<f4" if width == 4 else "<f8")
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, width, arr.shape[0]))
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    except OSError as e:
        raise FormatError(f"cannot write {path}: {e}") from e


def read_binary(path) -> np.ndarray:
    """Raw n x n array (float32 or float64, native byte order) from a binary file."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, width, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (expected {VERSION})")
    if width not in (4, 8):
        raise FormatError(f"{path}: unsupported element width {width}")
    need = _HEADER.size + n * n * width
    if len(data) < need:
        raise FormatError(f"{path}: truncated payload, {len(data)} of {need} bytes")
    if len(data) > need:
        raise FormatError(f"{path}: {len(data) - need} trailing bytes after payload")
    dt = np.dtype("<f4" if width == 4 else "<f8")
    arr = np.frombuffer(data, dtype=dt, count=n * n, offset=_HEADER.size).reshape(n, n)
    return arr.astype(dt.newbyteorder("="))


def read_distance_binary(path) -> DistanceMatrix:
    return DistanceMatrix(read_binary(path))


# ---------------------------------------------------------------------------
# points and graphs


def read_points(path) -> PointCloud:
    """Points file: one point per row, comma or whitespace separated, optional label column."""
    _, _, labels, vals = _read_table(path, "point")
    return PointCloud(vals, tuple(labels) if labels else None)


def points_to_distances(P: PointCloud, dtype=np.float64) -> DistanceMatrix:
    """Euclidean distances; each unordered pair is computed once, so D is exactly symmetric."""
    if P.n < 2:
        raise ValidationError(f"need at least 2 points, got {P.n}")
    sq = squareform(pdist(P.coords, "euclidean"))
    dup = np.argwhere(np.triu(sq == 0, 1))
    if len(dup):
        i, j = (int(k) for k in dup[0])
        raise ValidationError(f"duplicate points {i} and {j} (zero distance)")
    return DistanceMatrix(sq.astype(dtype), labels=P.labels)


def read_edge_list(path) -> EdgeList:
    """SNAP-style edge list: whitespace-separated vertex pairs, '#' comments."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    toks = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("%"):
            continue
        parts = s.replace(",", " ").split()
        if len(parts) < 2:
            raise ValidationError(f"{path}:{lineno}: expected two vertex ids, got {s!r}")
        toks.append(parts[:2])
    if not toks:
        raise ValidationError(f"{path}: empty graph")
    arr = np.array(toks)
    try:
        arr = arr.astype(np.int64)
    except ValueError:
        pass  # non-integer ids are kept as strings
    return EdgeList.from_pairs(arr)


def largest_component(E: EdgeList) -> tuple[np.ndarray, int]:
    """Vertex indices of the largest connected component and the number dropped."""
    if len(E.edges) == 0:
        raise ValidationError("empty graph (no edges)")
    n = E.n
    A = coo_matrix(
        (np.ones(len(E.edges), dtype=np.int8), (E.edges[:, 0], E.edges[:, 1])), shape=(n, n)
    ).tocsr()
    _, comp = connected_components(A, directed=False)
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == np.argmax(sizes))
    return keep, n - len(keep)


def graph_to_distances(E: EdgeList, *, workers: int = 1, dtype=np.float64) -> DistanceMatrix:
    """All-pairs hop counts on the largest connected component.

    Breadth-first search runs from every vertex (scipy's unweighted shortest
    paths); with ``workers > 1`` sources are split across threads that fill
    disjoint rows.
    """
    keep, dropped = largest_component(E)
    if len(keep) < 2:
        raise ValidationError("largest connected component has fewer than 2 vertices")
    if dropped:
        warnings.warn(
            f"graph is disconnected: dropped {dropped} vertices outside the largest "
            f"component ({len(keep)} kept)",
            DisconnectedGraphWarning,
            stacklevel=2,
        )
    remap = -np.ones(E.n, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    e = remap[E.edges]
    e = e[(e >= 0).all(axis=1)]
    m = len(keep)
    A = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(m, m)).tocsr()
    out = np.empty((m, m), dtype=np.float64)

    def rows(chunk):
        out[chunk] = shortest_path(A, method="D", directed=False, unweighted=True, indices=chunk)

    chunks = [c for c in np.array_split(np.arange(m), max(1, workers)) if len(c)]
    if len(chunks) == 1:
        rows(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(rows, chunks))
    labels = tuple(str(v) for v in E.ids[keep])
    return DistanceMatrix(out.astype(dtype), labels=labels)


def random_distances(n: int, seed=None, dtype=np.float64) -> DistanceMatrix:
    """Random symmetric distances, all off-diagonal values distinct.

    Distances are a random permutation of 1..C(n,2), exact in the target
    type while C(n,2) < 2**mantissa bits; beyond that uniform draws are used
    and ties become possible.
    """
    if n < 2:
        raise ValidationError(f"need at least 2 points, got {n}")
    rng = np.random.default_rng(seed)
    dt = np.dtype(dtype)
    m = n * (n - 1) // 2
    if m < 2 ** (np.finfo(dt).nmant + 1):
        vals = (rng.permutation(m) + 1).astype(dt)
    else:
        vals = rng.uniform(1.0, 2.0, size=m).astype(dt)
    A = np.zeros((n, n), dtype=dt)
    iu = np.triu_indices(n, 1)
    A[iu] = vals
    A.T[iu] = vals
    return DistanceMatrix(A)
