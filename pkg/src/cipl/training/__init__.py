from .checkpoint import CheckpointError
from .loop import (Adam, Batch, TrainConfig, TrainingError, TrainState, build_batch, ema_update,
                   epoch_rng, fit, init_state, objective, project, teacher_targets, train_step)
from .state import load_model, load_state, save_model, save_state

__all__ = [
    "Adam", "Batch", "CheckpointError", "TrainConfig", "TrainState", "TrainingError", "build_batch",
    "ema_update", "epoch_rng", "fit", "init_state", "load_model", "load_state", "objective", "project",
    "save_model", "save_state", "teacher_targets", "train_step",
]
