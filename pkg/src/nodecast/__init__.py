"""Node failure prediction from cluster traces.

Pipeline stages: parse or synthesize a trace, extract 416 windowed
features per (machine, 5-minute epoch), separate failure REMOVEs from
software updates, build forward-in-time benchmarks, train a committee
of small random forests with precision-weighted voting, evaluate with
ROC/PR sweeps, and replay quarantine policies to count saved work.
"""

from ._util import derive_seed, make_rng
from .datasets import (
    Benchmark,
    SamplingPlan,
    TrainingSetCursor,
    base_dataset,
    make_benchmarks,
)
from .ensemble import (
    EnsembleModel,
    EnsembleSpec,
    Member,
    ScoredPoint,
    build,
    load_model,
    save_model,
    score,
    weigh,
)
from .evaluation import EvalReport, OperatingPoint, at_fpr, binary_point, roc_pr
from .features import (
    DEFAULT_CONFIG,
    FEATURE_COUNT,
    FeatureConfig,
    FeatureRow,
    FeatureTable,
    assemble,
    compute_basic,
    feature_layout,
)
from .forest import ForestParams, TrainedForest, load_forest, save_forest, train
from .labeling import (
    DROPPED,
    FAIL,
    SAFE,
    UNLABELED,
    LabelConfig,
    RemoveClassification,
    Verdict,
    apply_labels,
    classify_removes,
)
from .quarantine import (
    AlarmStream,
    QuarantineOutcome,
    QuarantinePolicy,
    failure_times,
    interrupted_tasks,
    perfect_alarms,
    simulate,
)
from .synth import PlantedRemove, SynthConfig, expected_verdict, generate, generate_with_truth
from .trace import (
    EPOCH_US,
    EventKind,
    MachineEvent,
    MachineEventKind,
    TaskEvent,
    TraceBundle,
    TraceFormatError,
    UsageRecord,
    read_trace,
    up_intervals,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AlarmStream",
    "Benchmark",
    "DEFAULT_CONFIG",
    "DROPPED",
    "EPOCH_US",
    "EnsembleModel",
    "EnsembleSpec",
    "EvalReport",
    "EventKind",
    "FAIL",
    "FEATURE_COUNT",
    "FeatureConfig",
    "FeatureRow",
    "FeatureTable",
    "ForestParams",
    "LabelConfig",
    "MachineEvent",
    "MachineEventKind",
    "Member",
    "OperatingPoint",
    "PlantedRemove",
    "QuarantineOutcome",
    "QuarantinePolicy",
    "RemoveClassification",
    "SAFE",
    "SamplingPlan",
    "ScoredPoint",
    "SynthConfig",
    "TaskEvent",
    "TraceBundle",
    "TraceFormatError",
    "TrainedForest",
    "TrainingSetCursor",
    "UNLABELED",
    "UsageRecord",
    "Verdict",
    "apply_labels",
    "assemble",
    "at_fpr",
    "base_dataset",
    "binary_point",
    "build",
    "classify_removes",
    "compute_basic",
    "derive_seed",
    "expected_verdict",
    "failure_times",
    "feature_layout",
    "generate",
    "generate_with_truth",
    "interrupted_tasks",
    "load_forest",
    "load_model",
    "make_benchmarks",
    "make_rng",
    "perfect_alarms",
    "read_trace",
    "roc_pr",
    "save_forest",
    "save_model",
    "score",
    "simulate",
    "train",
    "up_intervals",
    "weigh",
    "write_trace",
]
