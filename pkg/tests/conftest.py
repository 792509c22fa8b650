from __future__ import annotations

import numpy as np
import pytest

from pald.core import DistanceMatrix
from pald.ingest import random_distances

# Results filled in by test_acceptance.py, printed once at the end of the run.
ACCEPTANCE_RESULTS: dict[str, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        name, ok, detail = ACCEPTANCE_RESULTS[k]
        tr.write_line(f"criterion {k} [{name}]: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def D2():
    return DistanceMatrix(np.array([[0.0, 5.0], [5.0, 0.0]]))


@pytest.fixture
def D3():
    # d12 = 1, d13 = 2, d23 = 3 (1-based names, 0-based storage)
    return DistanceMatrix(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]]))


@pytest.fixture
def T3():
    return DistanceMatrix(np.ones((3, 3)) - np.eye(3))


def make_corpus(count: int = 200, seed: int = 20240607, lo: int = 2, hi: int = 64):
    """Deterministic corpus of random matrices with distinct off-diagonal distances."""
    rng = np.random.default_rng(seed)
    return [random_distances(int(rng.integers(lo, hi + 1)), seed=int(rng.integers(1 << 31))) for _ in range(count)]


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


def tie_heavy(n: int, seed: int, levels: int = 3) -> DistanceMatrix:
    """Symmetric matrix drawing distances from only a few values."""
    rng = np.random.default_rng(seed)
    A = rng.integers(1, levels + 1, size=(n, n)).astype(np.float64)
    A = np.triu(A, 1)
    return DistanceMatrix(A + A.T)


def rel_close(a, b, rtol: float) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)) + 1e-300))
