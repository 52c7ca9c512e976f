import logging
from pathlib import Path

from prometheus_client import (CollectorRegistry, Counter, Gauge, Summary,
                               write_to_textfile)

REGISTRY = CollectorRegistry()

WINDOW_FORWARD_TIME = Summary(
    "window_forward_seconds",
    "Time spent classifying a single window",
    registry=REGISTRY,
)
EPOCH_TIME = Summary(
    "training_epoch_seconds",
    "Wall time of one training epoch",
    registry=REGISTRY,
)
TRAIN_LOSS = Gauge(
    "training_loss",
    "Mean focal loss of the last training epoch",
    registry=REGISTRY,
)
VALIDATION_LOSS = Gauge(
    "validation_loss",
    "Mean focal loss on the validation split after the last epoch",
    registry=REGISTRY,
)
LEARNING_RATE = Gauge(
    "learning_rate",
    "Current optimizer learning rate",
    registry=REGISTRY,
)
WINDOWS_EMITTED = Counter(
    "windows_emitted",
    "Windows produced by segmentation",
    ["label"],
    registry=REGISTRY,
)


def write_metrics(path: str | Path) -> None:
    """
    dump every collector in Prometheus text format
    """
    logging.info(f"Writing metrics to: {path}")
    write_to_textfile(str(path), REGISTRY)
