"""Shared-memory parallel pairwise and triplet drivers.

Pairwise: for each block pair the z range is split into ``p`` contiguous
chunks. Pass one gives every worker a private focus-count block, summed
afterwards; pass two needs no synchronization because a worker only writes
C columns inside its own z chunk.

Triplet: every block triple is a task that declares the U blocks (pass one)
or C blocks (pass two) it writes. Two tasks sharing a block never run at
the same time. The default scheduler takes per-block locks in sorted order;
the deterministic scheduler runs a dependency DAG in which each task waits
for the previous writer (in loop order) of each of its blocks, so every
memory location sees its updates in the sequential order.

Kernels are numba ``nogil`` functions, so plain Python threads run them
concurrently.
"""

from __future__ import annotations

import heapq
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .blocked import (
    Z_TILE,
    _pairwise_cohesion_block,
    _pairwise_commit_block,
    _pairwise_focus_block,
    assemble_triplet_cohesion,
    block_pairs,
    block_ranges,
    block_triples,
    blocked_pairwise,
    blocked_triplet,
    default_blocks,
    padded_copy,
    padded_zeros,
    reciprocals,
    symmetrize_focus,
    triplet_focus_init,
    triplet_kernels,
)
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


@dataclass(frozen=True)
class ParallelPlan:
    """Worker count and whether combination order must be reproducible."""

    p: int = 1
    deterministic: bool = False

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"worker count must be a positive integer, got {self.p!r}")


@dataclass(frozen=True)
class BlockTask:
    index: int
    blocks: tuple[int, int, int]
    phase: str  # "focus" or "cohesion"
    writes: frozenset = field(default_factory=frozenset)


def focus_writes(xb: int, yb: int, zb: int) -> frozenset:
    """U blocks written by the focus task (xb, yb, zb); U is symmetric so keys are unordered."""
    return frozenset(("U", a, b) for a, b in ((xb, yb), (xb, zb), (yb, zb)))


def cohesion_writes(xb: int, yb: int, zb: int) -> frozenset:
    """C blocks written by the cohesion task (xb, yb, zb); C is not symmetric so keys are ordered."""
    pairs = ((xb, yb), (yb, xb), (xb, zb), (zb, xb), (yb, zb), (zb, yb))
    return frozenset(("C", a, b) for a, b in pairs)


def triplet_tasks(nb: int, phase: str) -> list[BlockTask]:
    """All block-triple tasks of one pass, in sequential loop order."""
    writes = {"focus": focus_writes, "cohesion": cohesion_writes}[phase]
    return [
        BlockTask(i, t, phase, writes(*t)) for i, t in enumerate(block_triples(nb))
    ]


# ---------------------------------------------------------------------------
# Instrumentation


class WriteRecorder:
    """Collects ``(block_pair, worker, z0, z1)`` column ranges written in pairwise pass two."""

    def __init__(self):
        self.records: list[tuple[tuple[int, int], int, int, int]] = []
        self._lock = threading.Lock()

    def record(self, block_pair, worker, z0, z1):
        with self._lock:
            self.records.append((block_pair, worker, z0, z1))


class TaskRecorder:
    """Collects ``(task, writes, t_start, t_end, thread)`` for every executed task."""

    def __init__(self):
        self.records: list[tuple[BlockTask, frozenset, float, float, int]] = []
        self._lock = threading.Lock()

    def record(self, task, t0, t1):
        with self._lock:
            self.records.append((task, task.writes, t0, t1, threading.get_ident()))

    def overlapping_conflicts(self) -> list[tuple[BlockTask, BlockTask]]:
        """Pairs of tasks sharing a written block whose run intervals overlap."""
        bad = []
        by_key: dict = {}
        for rec in self.records:
            for k in rec[1]:
                by_key.setdefault(k, []).append(rec)
        for recs in by_key.values():
            recs = sorted(recs, key=lambda r: r[2])
            for a, b in zip(recs, recs[1:]):
                if b[2] < a[3]:
                    bad.append((a[0], b[0]))
        return bad


# ---------------------------------------------------------------------------
# Pairwise


def split_range(z0: int, z1: int, p: int, align: int = 16) -> list[tuple[int, int]]:
    """Split [z0, z1) into at most ``p`` contiguous chunks with aligned interior cuts."""
    n = z1 - z0
    cuts = [z0]
    for k in range(1, p):
        c = z0 + (n * k // p) // align * align
        cuts.append(max(c, cuts[-1]))
    cuts.append(z1)
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def parallel_pairwise(
    D: DistanceMatrix,
    b: int | None = None,
    plan: ParallelPlan = ParallelPlan(),
    policy=STRICT,
    *,
    dtype=None,
    z_tile: int | None = None,
    timer: PhaseTimer | None = None,
    recorder: WriteRecorder | None = None,
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Blocked pairwise with the third-point loop partitioned over ``plan.p`` threads.

    Per C entry the update order is the same as the sequential blocked
    run, so the result is bit-identical for every ``p``; the deterministic
    flag therefore changes nothing here.
    """
    policy = ComparisonPolicy.parse(policy)
    if plan.p == 1 and recorder is None:
        return blocked_pairwise(D, b, policy, dtype=dtype, z_tile=z_tile, timer=timer)
    timer = timer or null_timer()
    dt = _compute_dtype(D, dtype)
    b = default_blocks(dt.itemsize).b if b is None else int(b)
    n = D.n
    bz = max(b, Z_TILE) if z_tile is None else max(1, int(z_tile))
    chunks = split_range(0, n, plan.p)
    with timer.phase("memory"):
        d = padded_copy(D, dt)
        U = np.zeros((n, n), dtype=np.int32)
        C = padded_zeros(n, dt)
        bb = min(b, n)
        partials = np.zeros((len(chunks), bb, bb), dtype=np.int32)
        Ub = np.zeros((bb, bb), dtype=np.int32)
        W = np.zeros((bb, bb), dtype=dt)
    inclusive = policy.inclusive
    ranges = block_ranges(n, b)
    with ThreadPoolExecutor(max_workers=plan.p) as pool:
        for xb, yb in block_pairs(len(ranges)):
            (x0, x1), (y0, y1) = ranges[xb], ranges[yb]

            def focus(k):
                z0, z1 = chunks[k]
                partials[k] = 0
                _pairwise_focus_block(d, partials[k], x0, x1, y0, y1, z0, z1, bz, inclusive)

            def cohesion(k):
                z0, z1 = chunks[k]
                if recorder is not None:
                    recorder.record((xb, yb), k, z0, z1)
                _pairwise_cohesion_block(d, C, W, x0, x1, y0, y1, z0, z1, bz, inclusive)

            with timer.phase("focus"):
                list(pool.map(focus, range(len(chunks))))
                # rank-order combination; integer sums are exact anyway
                np.sum(partials, axis=0, out=Ub)
            with timer.phase("cohesion"):
                _pairwise_commit_block(Ub, U, W, x0, x1, y0, y1)
                list(pool.map(cohesion, range(len(chunks))))
    with timer.phase("memory"):
        result = FocusSizeMatrix(U), CohesionMatrix(C[:, :n], normalized=False, policy=policy)
    return result


# ---------------------------------------------------------------------------
# Triplet task scheduling


def _run_locked(tasks: Sequence[BlockTask], run: Callable[[BlockTask], None], p: int, recorder):
    """Any-order execution; per-block locks taken in sorted key order (no deadlock)."""
    keys = sorted({k for t in tasks for k in t.writes})
    locks = {k: threading.Lock() for k in keys}

    def execute(task):
        held = [locks[k] for k in sorted(task.writes)]
        for lk in held:
            lk.acquire()
        try:
            t0 = time.perf_counter()
            run(task)
            t1 = time.perf_counter()
        finally:
            for lk in reversed(held):
                lk.release()
        if recorder is not None:
            recorder.record(task, t0, t1)

    with ThreadPoolExecutor(max_workers=p) as pool:
        for f in [pool.submit(execute, t) for t in tasks]:
            f.result()


def task_dependencies(tasks: Sequence[BlockTask]) -> list[list[int]]:
    """For each task, the indices of earlier tasks that last wrote one of its blocks."""
    last: dict = {}
    deps = []
    for i, t in enumerate(tasks):
        deps.append(sorted({last[k] for k in t.writes if k in last}))
        for k in t.writes:
            last[k] = i
    return deps


def _run_dag(tasks: Sequence[BlockTask], run: Callable[[BlockTask], None], p: int, recorder):
    """Dependency-ordered execution: per block, writers run in loop order."""
    deps = task_dependencies(tasks)
    pending = [len(d) for d in deps]
    children: list[list[int]] = [[] for _ in tasks]
    for i, ds in enumerate(deps):
        for j in ds:
            children[j].append(i)
    ready = [i for i, c in enumerate(pending) if c == 0]
    heapq.heapify(ready)
    cond = threading.Condition()
    state = {"done": 0, "error": None}

    def worker():
        while True:
            with cond:
                while not ready and state["done"] < len(tasks) and state["error"] is None:
                    cond.wait()
                if state["error"] is not None or state["done"] >= len(tasks):
                    return
                i = heapq.heappop(ready)
            try:
                t0 = time.perf_counter()
                run(tasks[i])
                t1 = time.perf_counter()
                if recorder is not None:
                    recorder.record(tasks[i], t0, t1)
            except BaseException as exc:  # surface in the caller
                with cond:
                    state["error"] = exc
                    cond.notify_all()
                return
            with cond:
                state["done"] += 1
                for c in children[i]:
                    pending[c] -= 1
                    if pending[c] == 0:
                        heapq.heappush(ready, c)
                cond.notify_all()

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(p)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if state["error"] is not None:
        raise state["error"]


def schedule(tasks, run, plan: ParallelPlan, recorder=None):
    """Run ``tasks`` so that tasks with intersecting write sets never overlap in time."""
    if plan.p == 1:
        for t in tasks:
            t0 = time.perf_counter()
            run(t)
            if recorder is not None:
                recorder.record(t, t0, time.perf_counter())
    elif plan.deterministic:
        _run_dag(tasks, run, plan.p, recorder)
    else:
        _run_locked(tasks, run, plan.p, recorder)


def parallel_triplet(
    D: DistanceMatrix,
    b_focus: int | None = None,
    b_cohesion: int | None = None,
    plan: ParallelPlan = ParallelPlan(),
    policy=STRICT,
    *,
    validate: bool = False,
    dtype=None,
    timer: PhaseTimer | None = None,
    recorder: TaskRecorder | None = None,
) -> tuple[FocusSizeMatrix, CohesionMatrix]:
    """Blocked triplet with block-triple tasks run by a write-conflict-aware scheduler."""
    require_strict(policy)
    if plan.p == 1 and recorder is None:
        return blocked_triplet(
            D, b_focus, b_cohesion, validate=validate, dtype=dtype, timer=timer
        )
    if validate:
        check_no_ties(D)
    timer = timer or null_timer()
    dt = _compute_dtype(D, dtype)
    defaults = default_blocks(dt.itemsize)
    b_focus = defaults.b_focus if b_focus is None else int(b_focus)
    b_cohesion = defaults.b_cohesion if b_cohesion is None else int(b_cohesion)
    focus_kernel, cohesion_kernel = triplet_kernels()
    n = D.n
    with timer.phase("memory"):
        d = padded_copy(D, dt)
        U = triplet_focus_init(n)

    fr = block_ranges(n, b_focus)

    def run_focus(task):
        xb, yb, zb = task.blocks
        focus_kernel(d, U, *fr[xb], *fr[yb], *fr[zb])

    with timer.phase("focus"):
        schedule(triplet_tasks(len(fr), "focus"), run_focus, plan, recorder)
    with timer.phase("memory"):
        symmetrize_focus(U)
        A = padded_zeros(n, dt)
        B = padded_zeros(n, dt)

    cr = block_ranges(n, b_cohesion)

    def run_cohesion(task):
        xb, yb, zb = task.blocks
        cohesion_kernel(d, R, A, B, *cr[xb], *cr[yb], *cr[zb])

    with timer.phase("cohesion"):
        R = reciprocals(U, dt)
        schedule(triplet_tasks(len(cr), "cohesion"), run_cohesion, plan, recorder)
    with timer.phase("memory"):
        C = assemble_triplet_cohesion(A, B)
        result = FocusSizeMatrix(U[:, :n]), CohesionMatrix(C, normalized=False, policy=STRICT)
    return result
