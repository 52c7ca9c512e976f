import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.metrics.metrics import (EPOCH_TIME, LEARNING_RATE, TRAIN_LOSS,
                                        VALIDATION_LOSS)
from drivesense.network.model import (ModelParameters, Mode, backward, forward,
                                      predict_proba)
from drivesense.typing import IntArray
from drivesense.windowing.window_set import WindowSet

from .config import LossSettings, OptimizerConfig, ScheduleConfig
from .loss import focal_loss
from .optimizer import AdamWState, EarlyStopping, PlateauScheduler, adamw_step

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "lr", "seconds"]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.epochs[self.best_epoch - 1].val_loss

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds)
                for e in self.epochs
            ],
            columns=HISTORY_COLUMNS,
        )

    def save(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False)


def batch_indices(
    n: int, batch_size: int, rng: np.random.Generator
) -> list[IntArray]:
    """Seeded shuffle cut into batches; a trailing singleton joins the
    previous batch so batch normalisation always sees two windows."""
    order = rng.permutation(n)
    batches = [
        order[start:start + batch_size] for start in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate((batches[-1], tail))
    return batches


def evaluate_loss(
    model: ModelParameters, windows: WindowSet, settings: LossSettings
) -> float:
    probs = predict_proba(model, windows.features)
    loss, _ = focal_loss(probs, windows.labels, settings)
    return loss


def _require_finite(value: float, what: str, epoch: int) -> None:
    if not math.isfinite(value):
        raise ExecutionException(
            ExecutionExceptionCode.DivergedLoss,
            f"{what} became {value} at epoch {epoch}",
        )


def train(
    model: ModelParameters,
    train_windows: WindowSet,
    validation_windows: WindowSet,
    loss_settings: LossSettings,
    optimizer: OptimizerConfig,
    schedule: ScheduleConfig,
) -> tuple[ModelParameters, TrainHistory]:
    """
    Mini-batch AdamW with plateau learning-rate reduction and early stopping
    on validation loss. ``model`` is updated in place; the returned
    parameters are a copy taken at the best validation epoch.
    """
    for name, windows in (
        ("training", train_windows), ("validation", validation_windows)
    ):
        if len(windows) == 0:
            raise ValidationException(
                ValidationExceptionCode.EmptySplit,
                f"The {name} split holds no windows",
            )
    shuffle_rng = np.random.default_rng(optimizer.shuffle_seed)
    dropout_rng = np.random.default_rng([optimizer.shuffle_seed, model.seed])
    state = AdamWState()
    stopper = EarlyStopping(schedule.early_stop_patience, schedule.min_delta)
    plateau = PlateauScheduler(optimizer.lr, schedule)
    history = TrainHistory()
    best = model.clone()

    for epoch in range(1, optimizer.max_epochs + 1):
        started = time.perf_counter()
        lr = plateau.lr
        batch_losses = []
        batch_sizes = []
        for indices in batch_indices(
                len(train_windows), optimizer.batch_size, shuffle_rng):
            probs, cache = forward(
                model, train_windows.features[indices], Mode.train,
                dropout_rng)
            loss, dlogits = focal_loss(
                probs, train_windows.labels[indices], loss_settings)
            _require_finite(loss, "Training loss", epoch)
            grads = backward(model, cache, dlogits)
            adamw_step(model.tensors, grads, state, optimizer, lr)
            model.version += 1
            batch_losses.append(loss)
            batch_sizes.append(len(indices))
        train_loss = float(np.average(batch_losses, weights=batch_sizes))
        val_loss = evaluate_loss(model, validation_windows, loss_settings)
        _require_finite(val_loss, "Validation loss", epoch)

        elapsed = time.perf_counter() - started
        EPOCH_TIME.observe(elapsed)
        TRAIN_LOSS.set(train_loss)
        VALIDATION_LOSS.set(val_loss)
        LEARNING_RATE.set(lr)
        history.epochs.append(EpochRecord(
            epoch, train_loss, val_loss, lr,
            elapsed if schedule.record_timing else 0.0,
        ))
        logging.info(
            f"epoch {epoch}: train_loss={train_loss:.6f}"
            f" val_loss={val_loss:.6f} lr={lr:.2e} ({elapsed:.2f}s)"
        )

        if stopper.step(val_loss):
            history.best_epoch = epoch
            best = model.clone()
        plateau.step(val_loss)
        if stopper.should_stop:
            logging.info(
                f"Early stopping after epoch {epoch}, best epoch"
                f" {history.best_epoch}")
            break

    return best, history
