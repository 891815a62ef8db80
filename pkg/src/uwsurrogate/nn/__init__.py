"""Minimal differentiable building blocks and optimizers."""

from .engine import (
    LstmParams,
    ParamStore,
    backward,
    bilstm_forward,
    dense_forward,
    gradient_check,
    layer_norm,
    leaky_relu,
    lstm_cell,
    orthogonal,
    xavier_uniform,
)
from .optim import AdamState, PlateauAction, TrainSchedule, adam_step, plateau_step

__all__ = [
    "AdamState",
    "LstmParams",
    "ParamStore",
    "PlateauAction",
    "TrainSchedule",
    "adam_step",
    "backward",
    "bilstm_forward",
    "dense_forward",
    "gradient_check",
    "layer_norm",
    "leaky_relu",
    "lstm_cell",
    "orthogonal",
    "plateau_step",
    "xavier_uniform",
]
