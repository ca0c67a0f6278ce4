"""
cropsim/services/__init__.py
Stateful services: training, checkpoints, inference, run logging and rendering
"""

from .checkpoint_service import CheckpointService
from .inference_service import InferenceService, VariabilityResult
from .logging_service import LogCategory, LogLevel, RunLogger
from .render_service import GridCell, render_grid
from .training_service import (
    NonFiniteLossError,
    TrainingDivergedError,
    TrainingService,
    gradient_penalty,
    select_best_epoch,
)

__all__ = [
    "CheckpointService",
    "InferenceService",
    "VariabilityResult",
    "LogCategory",
    "LogLevel",
    "RunLogger",
    "GridCell",
    "render_grid",
    "NonFiniteLossError",
    "TrainingDivergedError",
    "TrainingService",
    "gradient_penalty",
    "select_best_epoch",
]
