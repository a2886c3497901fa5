"""Autodiff tape, CoED model, optimizer and training loop."""

from .autodiff import SparsePattern, Tape, TapeError, Tensor
from .model import CoEDLayerParams, CoEDModel, NonFiniteError, collect_grads, raw_from_theta, theta_from_raw
from .optim import Adam, adam_step
from .train import TrainConfig, TrainingDiverged, TrainResult, evaluate, gradient_check, loss_mse, train

__all__ = [
    "Adam", "CoEDLayerParams", "CoEDModel", "NonFiniteError", "SparsePattern", "Tape", "TapeError",
    "Tensor", "TrainConfig", "TrainResult", "TrainingDiverged", "adam_step", "collect_grads",
    "evaluate", "gradient_check", "loss_mse", "raw_from_theta", "theta_from_raw", "train",
]
