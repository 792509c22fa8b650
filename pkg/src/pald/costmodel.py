"""Leading-order computation/communication cost predictions.

Flop counts are weighted by per-operation times (``gamma_*``); words moved
use the two-level memory model with ``M`` words of fast memory. Lower-order
terms are dropped throughout.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import FormatError, ValidationError

DEFAULT_PEAK_GFLOPS = 249.6

PAIRWISE_W_COEFF = 4 * math.sqrt(2)  # ~5.66
TRIPLET_W_COEFF = math.sqrt(6) + 4 * math.sqrt(3)  # ~9.38

# normalized instruction counts per inner iteration, FMA/cast = 1, compare = 2
PAIRWISE_OPS = 16  # per (pair, third point)
TRIPLET_OPS = 39  # per distinct triplet


@dataclass(frozen=True)
class MachineParams:
    """Machine model. Times in seconds per operation or per word; M in words."""

    fast_memory_words: float = 262144.0  # 1 MiB of 32-bit words
    gamma_cmp: float = 2.0 / (DEFAULT_PEAK_GFLOPS * 1e9)
    gamma_fma: float = 1.0 / (DEFAULT_PEAK_GFLOPS * 1e9)
    gamma_cast: float = 1.0 / (DEFAULT_PEAK_GFLOPS * 1e9)
    beta: float = 4e-10
    peak_gflops: float = DEFAULT_PEAK_GFLOPS

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"machine parameter {f.name} must be positive, got {v!r}")

    @property
    def M(self) -> float:
        return self.fast_memory_words


@dataclass(frozen=True)
class CostEstimate:
    flops: float  # gamma-weighted computation time, seconds
    words: float
    seconds: float
    pct_peak: float  # predicted compute time / predicted total time
    unit_flops: float  # unweighted operation count (each cmp/fma counts 1)

    def __post_init__(self):
        if self.flops < 0 or self.words < 0:
            raise ValueError("cost components must be nonnegative")


def _check_n(n: int, least: int) -> None:
    if n < least:
        raise ValidationError(f"n must be >= {least}, got {n}")


def lower_bound(n: int, M: float) -> float:
    """Leading expression n^3 / sqrt(M) of the three-nested-loop bandwidth bound."""
    _check_n(n, 2)
    return n**3 / math.sqrt(M)


def normalized_op_count(n: int, variant: str) -> float:
    """Instruction count normalized to FMA/cast cost (comparisons count 2)."""
    _check_n(n, 2)
    if variant == "pairwise":
        return PAIRWISE_OPS * n * math.comb(n, 2)
    if variant == "triplet":
        return TRIPLET_OPS * math.comb(n, 3)
    raise ValueError(f"unknown variant {variant!r}")


def pct_peak(ops: float, seconds: float, peak_gflops: float = DEFAULT_PEAK_GFLOPS) -> float:
    """Achieved Gop/s over peak Gflop/s, as a fraction (0.277 means 27.7%)."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    return ops / (1e9 * seconds) / peak_gflops


def _estimate(n, m, count, weight, unit, w_coeff) -> CostEstimate:
    # With gamma expressed at peak rate, the predicted fraction of peak is the
    # share of predicted time spent computing. The normalized op counts use a
    # different (instruction-level) tally and are reported separately.
    F = weight * count
    W = w_coeff * n**3 / math.sqrt(m.M)
    seconds = F + m.beta * W
    return CostEstimate(
        flops=F,
        words=W,
        seconds=seconds,
        pct_peak=F / seconds,
        unit_flops=unit * count,
    )


def pairwise_costs(n: int, m: MachineParams = MachineParams()) -> CostEstimate:
    """Blocked pairwise: F = (5 cmp + 1 fma) n C(n,2), W = 4 sqrt(2) n^3 / sqrt(M)."""
    _check_n(n, 2)
    if m.M < 8:
        raise ValidationError("fast memory must hold at least 8 words")
    count = n * math.comb(n, 2)
    return _estimate(
        n, m, count, 5 * m.gamma_cmp + m.gamma_fma, 6, PAIRWISE_W_COEFF
    )


def triplet_costs(n: int, m: MachineParams = MachineParams()) -> CostEstimate:
    """Blocked triplet: F = (6 cmp + 2 fma) C(n,3), W = (sqrt(6) + 4 sqrt(3)) n^3 / sqrt(M)."""
    _check_n(n, 3)
    count = math.comb(n, 3)
    return _estimate(
        n, m, count, 6 * m.gamma_cmp + 2 * m.gamma_fma, 8, TRIPLET_W_COEFF
    )


def load_machine_params(path: str | Path, base: MachineParams = MachineParams()) -> MachineParams:
    """Read ``key = value`` lines (an INI section header is optional).

    Keys: fast_memory_words, gamma_cmp, gamma_fma, gamma_cast, beta,
    peak_gflops. Missing keys keep their defaults.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read machine config {path}: {e}") from e
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[machine]\n" + text)
    except configparser.Error as e:
        raise ValidationError(f"malformed machine config {path}: {e}") from e
    known = {f.name for f in fields(MachineParams)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ValidationError(f"unknown machine parameter {key!r} in {path}")
            try:
                values[key] = float(raw)
            except ValueError:
                raise ValidationError(f"machine parameter {key} is not a number: {raw!r}") from None
    return replace(base, **values)
