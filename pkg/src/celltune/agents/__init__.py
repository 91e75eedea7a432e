from .replay import EpsilonSchedule, Experience, PrioritizedReplay
from .gqn import (
    GQNAlgorithm,
    GQNModel,
    compute_targets,
    joint_value,
    select_actions,
    train_step,
    update_target,
)
from .baselines import (
    GAQModel,
    HeuristicAlgorithm,
    LocalAgentModel,
    PerCellAlgorithm,
    ego_network,
    heuristic_tilt_deg,
    ndqn_observation,
    ndqn_observation_matrix,
)
from .training import (
    EpisodeRow,
    TrainingConfig,
    greedy_policy,
    run_evaluation,
    run_training,
)

__all__ = [
    "EpisodeRow",
    "EpsilonSchedule",
    "Experience",
    "GAQModel",
    "GQNAlgorithm",
    "GQNModel",
    "HeuristicAlgorithm",
    "LocalAgentModel",
    "PerCellAlgorithm",
    "PrioritizedReplay",
    "TrainingConfig",
    "compute_targets",
    "ego_network",
    "greedy_policy",
    "heuristic_tilt_deg",
    "joint_value",
    "ndqn_observation",
    "ndqn_observation_matrix",
    "run_evaluation",
    "run_training",
    "select_actions",
    "train_step",
    "update_target",
]
