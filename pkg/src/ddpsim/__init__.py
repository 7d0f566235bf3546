"""Desk-scale simulation of data-parallel training mechanics.

Two subsystems built from the same corpus abstractions:

* batch balance: strategies for spreading variable-length sequences over
  GPUs (round-robin, global presorting, packing, node-local presorting
  with stratified draws) and a Monte-Carlo engine measuring per-GPU token
  imbalance;
* gradient sync: clipping after allreduce, before allreduce, or bucket by
  bucket, with an overlap timeline model and a toy training harness that
  compares the modes' sample efficiency under outlier mini-batches.
"""

from .balance import (
    Assignment,
    Pack,
    ScanPattern,
    assign_global_presort,
    assign_local_presort,
    assign_none,
    assign_packing,
    pack_corpus,
)
from .gradsync import (
    ClipConfig,
    ClipMode,
    GradientState,
    allreduce_mean,
    clip_by_norm,
    equal_bucket_layout,
    gradient_state_from_dict,
    sync_after,
    sync_before,
    sync_bucketwise,
    synchronize,
)
from .mcsim import (
    BalanceExperiment,
    BalanceStats,
    Strategy,
    run_ablation,
    run_balance_experiment,
)
from .seqdata import (
    DEFAULT_BIN_BOUNDARIES,
    DEFAULT_BIN_PROBS,
    MAX_SEQ_LEN,
    LengthDistribution,
    Sample,
    Topology,
    generate_corpus,
    ingest_lengths,
    load_distribution,
    write_lengths,
)
from .strata import (
    Strata,
    StratumAllocation,
    allocate_counts,
    draw_batch,
    stratify,
)
from .timeline import (
    Schedule,
    TimelinePlan,
    load_plan,
    schedule,
    sweep,
    with_bucket_count,
    with_comm_scale,
)
from .toytrain import (
    AdamState,
    DivergenceError,
    ModeSummary,
    ToyTask,
    TrainResult,
    adam_step,
    compare_modes,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment", "Pack", "ScanPattern",
    "assign_global_presort", "assign_local_presort", "assign_none",
    "assign_packing", "pack_corpus",
    "ClipConfig", "ClipMode", "GradientState",
    "allreduce_mean", "clip_by_norm", "equal_bucket_layout",
    "gradient_state_from_dict", "sync_after", "sync_before",
    "sync_bucketwise", "synchronize",
    "BalanceExperiment", "BalanceStats", "Strategy",
    "run_ablation", "run_balance_experiment",
    "DEFAULT_BIN_BOUNDARIES", "DEFAULT_BIN_PROBS", "MAX_SEQ_LEN",
    "LengthDistribution", "Sample", "Topology",
    "generate_corpus", "ingest_lengths", "load_distribution", "write_lengths",
    "Strata", "StratumAllocation", "allocate_counts", "draw_batch", "stratify",
    "Schedule", "TimelinePlan", "load_plan", "schedule", "sweep",
    "with_bucket_count", "with_comm_scale",
    "AdamState", "DivergenceError", "ModeSummary", "ToyTask", "TrainResult",
    "adam_step", "compare_modes", "train",
]
