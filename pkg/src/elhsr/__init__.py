"""Token-level linear reward models over LLM hidden-state traces.

Train gated linear reward heads on per-token hidden states (or logits),
rerank sampled reasoning paths with best-of-N selection, combine with
external rewards, and probe per-layer linear structure.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, ElhsrError, FormatError
from .estimator import ElhsrRewardModel
from .probe import CenteredPca, PooledCovarianceLda, ProbeConfig, crossval_probe
from .reward_model import (
    ElhsrParams,
    ScoreBreakdown,
    init_params,
    load_params,
    save_params,
    score_dataset,
    score_path,
    select_layers_view,
)
from .selection import (
    BonReport,
    Candidate,
    CandidateGroup,
    bon_accuracy,
    bon_select,
    evaluate_combination,
    rank_combine,
    scale_combine,
)
from .trace_store import (
    DatasetMeta,
    PathRecord,
    TraceDataset,
    gen_synthetic,
    read_dataset,
    validate_dataset,
    write_dataset,
)
from .training import EpochStats, TrainConfig, adamw_step, loss_and_grad, split_train_val, train_elhsr

__all__ = [
    "BonReport",
    "Candidate",
    "CandidateGroup",
    "CenteredPca",
    "ConfigError",
    "DataError",
    "DatasetMeta",
    "ElhsrError",
    "ElhsrParams",
    "ElhsrRewardModel",
    "EpochStats",
    "FormatError",
    "PathRecord",
    "PooledCovarianceLda",
    "ProbeConfig",
    "ScoreBreakdown",
    "TraceDataset",
    "TrainConfig",
    "adamw_step",
    "bon_accuracy",
    "bon_select",
    "crossval_probe",
    "evaluate_combination",
    "gen_synthetic",
    "init_params",
    "load_params",
    "loss_and_grad",
    "rank_combine",
    "read_dataset",
    "save_params",
    "scale_combine",
    "score_dataset",
    "score_path",
    "select_layers_view",
    "split_train_val",
    "train_elhsr",
    "validate_dataset",
    "write_dataset",
]
