from .config import (
    ALGORITHMS,
    DESK_PRESET,
    ExperimentConfig,
    build_config,
    scenario_from_dict,
)
from .runner import (
    METRICS_COLUMNS,
    CheckpointIncompatibleError,
    MetricsWriter,
    cmd_eval,
    cmd_heuristic_eval,
    cmd_sweep_w,
    cmd_train,
    mean_ci,
    output_root,
    read_metrics,
    train_seed,
)
from .cli import main

__all__ = [
    "ALGORITHMS",
    "DESK_PRESET",
    "CheckpointIncompatibleError",
    "ExperimentConfig",
    "METRICS_COLUMNS",
    "MetricsWriter",
    "build_config",
    "cmd_eval",
    "cmd_heuristic_eval",
    "cmd_sweep_w",
    "cmd_train",
    "main",
    "mean_ci",
    "output_root",
    "read_metrics",
    "scenario_from_dict",
    "train_seed",
]
