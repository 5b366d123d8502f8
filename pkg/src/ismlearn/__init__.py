"""Inverse statics learning lab: plant simulation, static-torque-set
estimation, goal babbling / direction sampling, and symmetry exploitation."""

from .babbling import GoalBabblingConfig, run_goal_babbling
from .direction import DirectionSamplingConfig, run_direction_sampling
from .learners import BatchNet, BatchTrainConfig, LocalLinearMap, TrainingSample, batch_train
from .robot import ManipulatorModel, SettleOutcome, SettleParams, SettleStatus, load_robot
from .sst import SSTEstimate, explore_sst

__version__ = "0.1.0"

__all__ = [
    "BatchNet",
    "BatchTrainConfig",
    "DirectionSamplingConfig",
    "GoalBabblingConfig",
    "LocalLinearMap",
    "ManipulatorModel",
    "SSTEstimate",
    "SettleOutcome",
    "SettleParams",
    "SettleStatus",
    "TrainingSample",
    "batch_train",
    "explore_sst",
    "load_robot",
    "run_direction_sampling",
    "run_goal_babbling",
    "__version__",
]
