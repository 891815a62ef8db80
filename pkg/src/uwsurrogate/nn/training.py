"""Epoch loop shared by the autoencoder and the denoiser."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Mapping

import numpy as np
import torch

from .. import rng as rngmod
from ..errors import InvalidInputError, TrainingDivergedError
from .engine import ParamStore, backward
from .optim import AdamState, PlateauAction, TrainSchedule, adam_step, plateau_step

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    patience: int = 3
    reduction_factor: float = 10.0
    min_lr: float = 1e-6
    batch_size: int = 64
    max_epochs: int = 100
    seed: int = 0
    # wall-clock cap in seconds; runs that hit it are not reproducible
    time_limit: float | None = None
    log_path: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown training keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    extras: dict[str, float] = field(default_factory=dict)


BatchLoss = Callable[[np.ndarray, np.random.Generator], "tuple[torch.Tensor, dict[str, float]]"]
Validate = Callable[[], "tuple[float, dict[str, float]]"]


def fit(
    store: ParamStore,
    n_train: int,
    batch_loss: BatchLoss,
    validate: Validate,
    cfg: TrainConfig,
    log_columns: tuple[str, ...] = (),
    stream_name: str = "train",
) -> list[EpochRecord]:
    """Adam over shuffled mini-batches with plateau LR control.

    The last partial batch is kept.  On return the store holds the
    parameters with the best validation loss seen.  Each epoch's shuffle and
    noise come from ``stream(cfg.seed, stream_name, epoch)``.
    """
    if n_train < 1:
        raise InvalidInputError("empty training set")
    sched = TrainSchedule(cfg.learning_rate, cfg.patience, cfg.reduction_factor, cfg.min_lr)
    adam = AdamState()
    history: list[EpochRecord] = []
    best_state = store.state_dict()
    best_val = math.inf
    start = time.monotonic()

    writer = None
    log_file = None
    if cfg.log_path:
        log_file = open(cfg.log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "lr", "train_loss", "val_loss", *log_columns])
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            rng = rngmod.stream(cfg.seed, stream_name, epoch)
            order = rng.permutation(n_train)
            lr = sched.learning_rate
            total, seen = 0.0, 0
            sums: dict[str, float] = {}
            for lo in range(0, n_train, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                store.zero_grad()
                loss, extras = batch_loss(idx, rng)
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite training loss at epoch {epoch}, batch starting {lo}"
                    )
                backward(loss, store)
                adam_step(store, adam, lr)
                total += value * len(idx)
                seen += len(idx)
                for k, v in extras.items():
                    sums[k] = sums.get(k, 0.0) + v * len(idx)
            train_loss = total / seen
            val_loss, val_extras = validate()
            if not math.isfinite(val_loss):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
            extras = {k: v / seen for k, v in sums.items()}
            extras.update(val_extras)
            rec = EpochRecord(epoch, lr, train_loss, val_loss, extras)
            history.append(rec)
            if writer:
                writer.writerow(
                    [epoch, repr(lr), repr(train_loss), repr(val_loss)]
                    + [repr(float(extras.get(c, float("nan")))) for c in log_columns]
                )
                log_file.flush()
            logger.info("epoch %d lr %.2e train %.6g val %.6g", epoch, lr, train_loss, val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_state = store.state_dict()
            action = plateau_step(sched, val_loss)
            if action is PlateauAction.STOP:
                logger.info("learning rate fell below %g; stopping", cfg.min_lr)
                break
            if cfg.time_limit is not None and time.monotonic() - start > cfg.time_limit:
                logger.info("time limit reached after epoch %d", epoch)
                break
    finally:
        if log_file:
            log_file.close()
    store.load_state(best_state)
    store.zero_grad()
    return history
