"""Strong-tie extraction from a normalized cohesion matrix.

Threshold and symmetrization follow the original PaLD method: a pair is a
strong tie when ``min(c_xy, c_yx)`` reaches half the mean self-cohesion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CohesionMatrix
from .errors import ValidationError


@dataclass(frozen=True)
class StrongTieGraph:
    threshold: float
    edges: list[tuple[int, int, float]]  # (x, y, strength) with x < y

    def __len__(self):
        return len(self.edges)


def _require_normalized(C: CohesionMatrix) -> np.ndarray:
    if not C.normalized:
        raise ValidationError("strong-tie analysis needs a normalized cohesion matrix")
    return np.asarray(C.values, dtype=np.float64)


def universal_threshold(C: CohesionMatrix) -> float:
    """Half the mean of the diagonal of normalized C."""
    return 0.5 * float(np.mean(np.diagonal(_require_normalized(C))))


def strong_ties(C: CohesionMatrix, threshold: float | None = None) -> StrongTieGraph:
    """Undirected edges with ``min(c_xy, c_yx) >= threshold`` (equal values are kept)."""
    c = _require_normalized(C)
    thr = universal_threshold(C) if threshold is None else float(threshold)
    S = np.minimum(c, c.T)
    xs, ys = np.nonzero(np.triu(S >= thr, 1))
    return StrongTieGraph(thr, [(int(x), int(y), float(S[x, y])) for x, y in zip(xs, ys)])


def neighbors(C: CohesionMatrix, focus: int, k: int) -> list[tuple[int, float]]:
    """Top-k points z != focus by ``min(c_xz, c_zx)``; ties broken by lower index."""
    c = _require_normalized(C)
    n = c.shape[0]
    if not 0 <= focus < n:
        raise ValidationError(f"focus point {focus} out of range [0, {n})")
    if not 1 <= k < n:
        raise ValidationError(f"k must satisfy 1 <= k < n = {n}, got {k}")
    s = np.minimum(c[focus], c[:, focus])
    order = [z for z in np.lexsort((np.arange(n), -s)) if z != focus][:k]
    return [(int(z), float(s[z])) for z in order]
