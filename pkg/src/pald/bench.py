"""Benchmark harness: repeated timed runs, per-phase CSV rows, speedup summaries."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from statistics import mean
from typing import Iterable, Sequence

import numpy as np

from .api import compute
from .blocked import BlockConfig
from .ingest import random_distances

DEFAULT_TRIALS = 5


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    n: int
    b: int
    b_focus: int
    b_cohesion: int
    p: int
    trial: int
    total_s: float
    focus_s: float
    cohesion_s: float
    mem_overhead_s: float


@dataclass(frozen=True)
class BenchSummary:
    algorithm: str
    n: int
    b: int
    b_focus: int
    b_cohesion: int
    p: int
    mean_s: float
    speedup: float  # baseline mean / this mean, same n
    scaling_speedup: float  # same config at p=1 / this mean
    efficiency: float  # scaling_speedup / p


COLUMNS = [f.name for f in fields(BenchRow)]


def warm_up(algorithms: Iterable[str], dtype=np.float32) -> None:
    """Trigger JIT compilation so it does not land in the first timed trial."""
    D = random_distances(12, seed=0, dtype=dtype)
    for alg in algorithms:
        compute(D, alg, blocks=BlockConfig(4, 4, 4), threads=1)
        if alg.startswith("blocked"):
            compute(D, alg, blocks=BlockConfig(4, 4, 4), threads=2)


def run_bench(
    sizes: Sequence[int],
    algorithms: Sequence[str],
    *,
    blocks: Sequence[BlockConfig] = (BlockConfig(),),
    threads: Sequence[int] = (1,),
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    dtype=np.float32,
    progress=None,
) -> list[BenchRow]:
    """Time every (n, algorithm, blocks, p) combination ``trials`` times.

    Naive algorithms run once per n regardless of the block/thread sweeps.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    warm_up(algorithms, dtype)
    rows = []
    for n in sizes:
        D = random_distances(n, seed=seed, dtype=dtype)
        for alg in algorithms:
            naive = alg.startswith("naive")
            for cfg in blocks[:1] if naive else blocks:
                for p in (1,) if naive else threads:
                    for trial in range(trials):
                        res = compute(D, alg, blocks=cfg, threads=p, dtype=dtype)
                        t = res.timing
                        row = BenchRow(
                            alg, n, cfg.b, cfg.b_focus, cfg.b_cohesion, p, trial,
                            t.total_seconds, t.local_focus_seconds,
                            t.cohesion_seconds, t.memory_overhead_seconds,
                        )
                        rows.append(row)
                        if progress:
                            progress(row)
    return rows


def write_csv(path, rows: Sequence[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def summarize(rows: Sequence[BenchRow], baseline: str = "naive-pairwise") -> list[BenchSummary]:
    """Mean time per configuration, speedup against ``baseline`` at the same n
    (its fastest configuration at p=1), and strong-scaling efficiency."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.algorithm, r.n, r.b, r.b_focus, r.b_cohesion, r.p)].append(r.total_s)
    means = {k: mean(v) for k, v in groups.items()}
    base = {}
    for (alg, n, *_rest, p), m in means.items():
        if alg == baseline and p == 1:
            base[n] = min(base.get(n, math.inf), m)
    out = []
    for key, m in sorted(means.items()):
        alg, n, b, bf, bc, p = key
        ref = means.get((alg, n, b, bf, bc, 1))
        scaling = ref / m if ref else math.nan
        out.append(
            BenchSummary(
                alg, n, b, bf, bc, p, m,
                base[n] / m if n in base else math.nan,
                scaling,
                scaling / p,
            )
        )
    return out


def format_summary(summary: Sequence[BenchSummary], baseline: str) -> str:
    head = f"{'algorithm':<17} {'n':>6} {'b':>5} {'bf':>5} {'bc':>5} {'p':>3} {'mean_s':>10} {'vs ' + baseline:>20} {'scaling':>8} {'eff':>6}"
    lines = [head]
    for s in summary:
        lines.append(
            f"{s.algorithm:<17} {s.n:>6} {s.b:>5} {s.b_focus:>5} {s.b_cohesion:>5} {s.p:>3} "
            f"{s.mean_s:>10.4f} {s.speedup:>20.2f} {s.scaling_speedup:>8.2f} {s.efficiency:>6.2f}"
        )
    return "\n".join(lines)
