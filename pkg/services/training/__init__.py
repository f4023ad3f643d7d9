"""
training - run configuration, stage schedule, checkpoints and the training loop
"""

from .checkpoint import FORMAT_VERSION, load_backbone, load_checkpoint, save_checkpoint
from .config import RunConfig, apply_overrides, load_config
from .engine import (
    METRIC_COLUMNS,
    EpochSummary,
    StepRecord,
    Trainer,
    TrainResult,
    build_datasets,
    build_model,
    evaluate_accuracy,
    train,
)
from .schedule import active_stages, progressive_stage_selector, stage_term, total_loss

__all__ = [
    "RunConfig",
    "load_config",
    "apply_overrides",
    "progressive_stage_selector",
    "active_stages",
    "stage_term",
    "total_loss",
    "FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "load_backbone",
    "METRIC_COLUMNS",
    "StepRecord",
    "EpochSummary",
    "TrainResult",
    "Trainer",
    "build_model",
    "build_datasets",
    "evaluate_accuracy",
    "train",
]
