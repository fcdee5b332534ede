"""Shared training loop: Adam + early stopping + plateau LR reduction.

Both the embedding model and the softmax classifier train through
``run_training``; they differ only in how an epoch of updates is produced and
how validation loss is computed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

from .layers import Sequential
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float = 1e-3
    max_epochs: int = 60
    patience: int = 8
    lr_patience: int = 4
    lr_factor: float = 0.5
    min_delta: float = 1e-4
    batch_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingHistory:
    initial_val_loss: float
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        if self.best_epoch == 0:
            return self.initial_val_loss
        return self.epochs[self.best_epoch - 1].val_loss


def run_training(
    net: Sequential,
    schedule: TrainSchedule,
    run_epoch: Callable[[Adam, int], float],
    val_loss_fn: Callable[[], float],
) -> TrainingHistory:
    """Train until validation loss stops improving; restore the best weights.

    ``run_epoch(optimizer, epoch)`` performs one epoch of updates and returns
    the mean training loss.  Raises on non-finite losses.
    """
    optimizer = Adam(lr=schedule.learning_rate)
    initial = float(val_loss_fn())
    if not math.isfinite(initial):
        raise RuntimeError(f"non-finite validation loss before training: {initial}")
    history = TrainingHistory(initial_val_loss=initial)
    best_val = initial
    best_state = net.get_state()
    bad_epochs = 0
    bad_lr_epochs = 0

    for epoch in range(1, schedule.max_epochs + 1):
        train_loss = float(run_epoch(optimizer, epoch))
        val_loss = float(val_loss_fn())
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}: train={train_loss} val={val_loss} "
                f"(lr={optimizer.lr})"
            )
        history.epochs.append(EpochRecord(epoch, train_loss, val_loss, optimizer.lr))
        log.debug("epoch %d train %.4f val %.4f lr %.2g", epoch, train_loss, val_loss, optimizer.lr)
        if val_loss < best_val - schedule.min_delta:
            best_val = val_loss
            best_state = net.get_state()
            history.best_epoch = epoch
            bad_epochs = 0
            bad_lr_epochs = 0
        else:
            bad_epochs += 1
            bad_lr_epochs += 1
            if bad_lr_epochs >= schedule.lr_patience:
                optimizer.lr *= schedule.lr_factor
                bad_lr_epochs = 0
            if bad_epochs >= schedule.patience:
                break

    net.set_state(best_state)
    return history
