"""One-call entry point that picks an algorithm, runs it, and finishes C."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .blocked import BlockConfig, blocked_pairwise, blocked_triplet, default_blocks
from .core import (
    INCLUSIVE_SPLIT,
    STRICT,
    CohesionMatrix,
    ComparisonPolicy,
    DistanceMatrix,
    FocusSizeMatrix,
    LocalDepthVector,
    _compute_dtype,
    check_no_ties,
    fill_diagonal,
    has_ties,
    local_depths,
    normalize,
    pairwise_entrywise,
    require_strict,
    triplet_entrywise,
)
from .parallel import ParallelPlan, parallel_pairwise, parallel_triplet
from .timing import PhaseTimer, TimingBreakdown, timing_breakdown

ALGORITHMS = ("naive-pairwise", "naive-triplet", "blocked-pairwise", "blocked-triplet")
TRIPLET_CROSSOVER = 1024  # blocked triplet is the default from this many points up


class TieWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PaldResult:
    focus: FocusSizeMatrix
    cohesion: CohesionMatrix
    depths: LocalDepthVector | None
    algorithm: str
    policy: ComparisonPolicy
    blocks: BlockConfig | None
    threads: int
    timing: TimingBreakdown

    @property
    def n(self) -> int:
        return self.cohesion.n


def choose_defaults(D: DistanceMatrix, algorithm=None, policy=None) -> tuple[str, ComparisonPolicy]:
    """Fill in algorithm/policy: tied inputs go to pairwise + split, else size decides."""
    if policy is None:
        triplet_requested = algorithm is not None and "triplet" in algorithm
        policy = INCLUSIVE_SPLIT if (not triplet_requested and has_ties(D)) else STRICT
    policy = ComparisonPolicy.parse(policy)
    if algorithm is None:
        if policy is STRICT and D.n >= TRIPLET_CROSSOVER:
            algorithm = "blocked-triplet"
        else:
            algorithm = "blocked-pairwise"
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    return algorithm, policy


def compute(
    D: DistanceMatrix,
    algorithm: str | None = None,
    policy=None,
    *,
    blocks: BlockConfig | None = None,
    threads: int = 1,
    deterministic: bool = False,
    normalized: bool = True,
    validate: bool = False,
    dtype=None,
) -> PaldResult:
    """Run one PaLD algorithm end to end.

    Triplet results get their diagonal filled so every algorithm returns the
    same matrix. ``threads`` only affects the blocked algorithms.
    """
    algorithm, policy = choose_defaults(D, algorithm, policy)
    triplet = "triplet" in algorithm
    if triplet:
        require_strict(policy, algorithm)
        if validate:
            check_no_ties(D)
        elif has_ties(D):
            warnings.warn(
                "input has exact distance ties; the triplet algorithm drops them "
                "(strict policy). Use blocked-pairwise with the split policy to count them.",
                TieWarning,
                stacklevel=2,
            )
    dt = _compute_dtype(D, dtype)
    plan = ParallelPlan(max(1, int(threads)), deterministic)
    timer = PhaseTimer()
    cfg = None
    if algorithm == "naive-pairwise":
        with timer.phase("cohesion"):  # both passes interleave per pair
            U, C = pairwise_entrywise(D, policy, dtype=dt)
    elif algorithm == "naive-triplet":
        with timer.phase("cohesion"):
            U, C = triplet_entrywise(D, dtype=dt)
    else:
        cfg = blocks or default_blocks(dt.itemsize)
        if algorithm == "blocked-pairwise":
            U, C = parallel_pairwise(D, cfg.b, plan, policy, dtype=dt, timer=timer)
        else:
            U, C = parallel_triplet(
                D, cfg.b_focus, cfg.b_cohesion, plan, dtype=dt, timer=timer
            )
    with timer.phase("memory"):
        if triplet:
            C = fill_diagonal(U, C)
        depths = None
        if normalized:
            C = normalize(C)
            depths = local_depths(C)
    timer.stop()
    return PaldResult(
        U, C, depths, algorithm, policy, cfg, plan.p if cfg else 1, timing_breakdown(timer)
    )
