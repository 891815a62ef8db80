"""Adam and the reduce-on-plateau / early-stop learning-rate protocol."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import torch

from ..errors import InvalidInputError
from .engine import ParamStore


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of every parameter, in place."""
    if not lr > 0:
        raise InvalidInputError("learning rate must be positive")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    with torch.no_grad():
        for name, p in store.items():
            g = store.grad(name)
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            if m.shape != p.shape:
                raise InvalidInputError(f"Adam moment shape mismatch for {name}")
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            denom = (v / c2).sqrt_().add_(state.eps)
            p.addcdiv_(m, denom, value=-lr / c1)


class PlateauAction(str, enum.Enum):
    CONTINUE = "continue"
    REDUCED = "reduced"
    STOP = "stop"


@dataclass
class TrainSchedule:
    """Learning rate divided by ``reduction_factor`` after ``patience``
    epochs without validation improvement; training stops once it falls
    below ``min_lr``."""

    learning_rate: float = 1e-3
    patience: int = 3
    reduction_factor: float = 10.0
    min_lr: float = 1e-6
    best_val: float = math.inf
    epochs_since_best: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.patience < 1:
            raise InvalidInputError("patience must be >= 1")
        if not self.reduction_factor > 1:
            raise InvalidInputError("reduction_factor must be > 1")


def plateau_step(schedule: TrainSchedule, val_loss: float) -> PlateauAction:
    """Record one epoch's validation loss and update the schedule in place."""
    if not math.isfinite(val_loss):
        raise InvalidInputError("validation loss must be finite")
    if val_loss < schedule.best_val:
        schedule.best_val = val_loss
        schedule.epochs_since_best = 0
        return PlateauAction.CONTINUE
    schedule.epochs_since_best += 1
    if schedule.epochs_since_best < schedule.patience:
        return PlateauAction.CONTINUE
    schedule.epochs_since_best = 0
    schedule.learning_rate /= schedule.reduction_factor
    # relative slack so 1e-3 / 10**3 (= 9.99...e-7 in binary) still counts as 1e-6
    if schedule.learning_rate < schedule.min_lr * (1 - 1e-9):
        return PlateauAction.STOP
    return PlateauAction.REDUCED
