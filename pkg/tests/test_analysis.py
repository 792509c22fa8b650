from fractions import Fraction

import numpy as np
import pytest

from pald.analysis import neighbors, strong_ties, universal_threshold
from pald.api import compute
from pald.core import CohesionMatrix
from pald.errors import ValidationError
from pald.ingest import random_distances


@pytest.fixture
def C3(D3):
    return compute(D3, "naive-pairwise").cohesion


def test_d3_threshold_and_empty_graph(C3):
    thr = universal_threshold(C3)
    assert thr == pytest.approx(float(Fraction(7, 36)), abs=1e-15)
    g = strong_ties(C3)
    assert g.threshold == thr and len(g) == 0


def test_t3_split_all_strengths_equal(T3):
    C = compute(T3, "naive-pairwise", "split").cohesion
    assert universal_threshold(C) == pytest.approx(1 / 6)
    assert len(strong_ties(C)) == 0  # 1/12 < 1/6
    # at a threshold equal to the common strength every pair is kept
    g = strong_ties(C, threshold=C.values[0, 1])
    assert [(x, y) for x, y, _ in g.edges] == [(0, 1), (0, 2), (1, 2)]


def test_d3_neighbors(C3):
    assert neighbors(C3, 0, 1) == [(1, pytest.approx(1 / 6))]
    # point 2's neighbors: both strengths 0, tie broken by index
    assert [z for z, _ in neighbors(C3, 2, 2)] == [0, 1]


def test_strong_tie_invariants():
    C = compute(random_distances(40, seed=3)).cohesion
    g = strong_ties(C)
    c = C.values
    for x, y, s in g.edges:
        assert x < y and s >= g.threshold
        assert s == min(c[x, y], c[y, x])
    kept = {(x, y) for x, y, _ in g.edges}
    for x in range(40):
        for y in range(x + 1, 40):
            if (x, y) not in kept:
                assert min(c[x, y], c[y, x]) < g.threshold


def test_neighbors_sorted_descending():
    C = compute(random_distances(30, seed=4)).cohesion
    out = neighbors(C, 5, 29)
    assert [s for _, s in out] == sorted((s for _, s in out), reverse=True)
    assert 5 not in [z for z, _ in out]


def test_analysis_errors(C3):
    raw = CohesionMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]))
    with pytest.raises(ValidationError, match="normalized"):
        strong_ties(raw)
    with pytest.raises(ValidationError):
        neighbors(C3, 0, 3)  # k >= n
    with pytest.raises(ValidationError):
        neighbors(C3, 0, 0)
    with pytest.raises(ValidationError):
        neighbors(C3, 7, 1)
