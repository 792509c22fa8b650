"""Partitioned local depth (PaLD) cohesion: reference, blocked and parallel algorithms."""

from .analysis import StrongTieGraph, neighbors, strong_ties, universal_threshold
from .api import ALGORITHMS, PaldResult, compute
from .blocked import (
    BlockConfig,
    MaskTriple,
    autotune_blocks,
    blocked_pairwise,
    blocked_triplet,
    default_blocks,
    pairwise_masks,
    triplet_masks,
)
from .core import (
    INCLUSIVE_SPLIT,
    STRICT,
    CohesionMatrix,
    ComparisonPolicy,
    DistanceMatrix,
    FocusSizeMatrix,
    LocalDepthVector,
    TripletContribution,
    fill_diagonal,
    focus_size,
    has_ties,
    local_depths,
    normalize,
    oracle_cohesion,
    oracle_contribution,
    pairwise_entrywise,
    triplet_entrywise,
)
from .costmodel import (
    CostEstimate,
    MachineParams,
    load_machine_params,
    lower_bound,
    normalized_op_count,
    pairwise_costs,
    pct_peak,
    triplet_costs,
)
from .errors import FormatError, PaldError, TieError, UnsupportedPolicyError, ValidationError
from .parallel import BlockTask, ParallelPlan, parallel_pairwise, parallel_triplet
from .timing import PhaseTimer, timing_breakdown

__version__ = "0.1.0"
