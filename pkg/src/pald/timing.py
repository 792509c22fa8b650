"""Wall-clock phase accounting for the local focus / cohesion / memory split."""

from __future__ import annotations

import contextlib
import threading
import time
from collections import defaultdict
from typing import NamedTuple

PHASES = ("focus", "cohesion", "memory")


class PhaseTimer:
    """Accumulates seconds per named phase plus the total wall time of a run.

    ``total`` spans from construction (or the last ``start``) to ``stop``.
    Phases must not nest; the parallel drivers time phases from the
    coordinating thread only, so worker threads never touch the timer.
    """

    def __init__(self):
        self.seconds: dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()
        self.start()

    def start(self) -> None:
        self.seconds.clear()
        self._t0 = time.perf_counter()
        self._t1: float | None = None

    def stop(self) -> float:
        self._t1 = time.perf_counter()
        return self.total

    @property
    def total(self) -> float:
        end = self._t1 if self._t1 is not None else time.perf_counter()
        return end - self._t0

    @contextlib.contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            with self._lock:
                self.seconds[name] += dt


class _NullTimer:
    def phase(self, name):
        return contextlib.nullcontext()


_NULL = _NullTimer()


def null_timer():
    return _NULL


class TimingBreakdown(NamedTuple):
    local_focus_seconds: float
    cohesion_seconds: float
    memory_overhead_seconds: float
    total_seconds: float

    @property
    def covered(self) -> float:
        """Fraction of total wall time attributed to one of the three phases."""
        s = self.local_focus_seconds + self.cohesion_seconds + self.memory_overhead_seconds
        return s / self.total_seconds if self.total_seconds > 0 else 1.0

    def fractions(self) -> tuple[float, float, float]:
        t = self.total_seconds or 1.0
        return (
            self.local_focus_seconds / t,
            self.cohesion_seconds / t,
            self.memory_overhead_seconds / t,
        )


def timing_breakdown(run: PhaseTimer) -> TimingBreakdown:
    """Per-phase seconds for an instrumented run (stopped or still running)."""
    s = run.seconds
    return TimingBreakdown(s["focus"], s["cohesion"], s["memory"], run.total)
