import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import FloatArray

from .frame import FeatureFrame, SplitTag

STD_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: FloatArray
    std: FloatArray
    channels: tuple[str, ...]
    fitted_on: str = SplitTag.train.value

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if not mean.shape == std.shape == (len(self.channels),):
            raise ValidationException(
                ValidationExceptionCode.ChannelMismatch,
                f"NormStats holds {mean.shape} means, {std.shape} stds"
                f" for {len(self.channels)} channels",
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def normalize(self, values: FloatArray) -> FloatArray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.channels):
            raise ValidationException(
                ValidationExceptionCode.ChannelMismatch,
                f"Expected {len(self.channels)} channels,"
                f" got {values.shape[-1]}",
            )
        return (values - self.mean) / self.std

    def denormalize(self, values: FloatArray) -> FloatArray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_json(self) -> list[dict[str, float | str]]:
        return [
            {"channel": name, "mean": float(mean), "std": float(std)}
            for name, mean, std in zip(self.channels, self.mean, self.std)
        ]

    def to_document(self) -> dict[str, Any]:
        return {"fitted_on": self.fitted_on, "channels": self.to_json()}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_document(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "NormStats":
        return cls.from_document(json.loads(Path(path).read_text()))

    @classmethod
    def from_document(cls, document: dict[str, Any]) -> "NormStats":
        rows = document["channels"]
        return cls(
            mean=np.array([row["mean"] for row in rows]),
            std=np.array([row["std"] for row in rows]),
            channels=tuple(row["channel"] for row in rows),
            fitted_on=document.get("fitted_on", SplitTag.train.value),
        )


def fit_normalizer(frames: Iterable[FeatureFrame]) -> NormStats:
    """
    Pooled per-channel mean and population std over every training sample.
    Frames tagged anything but ``train`` are refused.
    """
    frames = list(frames)
    for frame in frames:
        if frame.split_tag != SplitTag.train:
            raise ValidationException(
                ValidationExceptionCode.LeakageGuard,
                f"Refusing to fit normalisation on a frame of session"
                f" {frame.session_id} tagged {frame.split_tag.value}",
            )
    frames = [frame for frame in frames if len(frame) > 0]
    if len(frames) == 0:
        raise ValidationException(
            ValidationExceptionCode.EmptyTrainingPool,
            "No training samples to fit normalisation on",
        )
    channels = frames[0].channels
    for frame in frames:
        if frame.channels != channels:
            raise ValidationException(
                ValidationExceptionCode.ChannelMismatch,
                f"Session {frame.session_id} has channels {frame.channels},"
                f" expected {channels}",
            )
    pooled = np.concatenate([frame.values for frame in frames], axis=0)
    stats = NormStats(
        mean=pooled.mean(axis=0),
        std=pooled.std(axis=0),
        channels=channels,
    )
    logging.debug(
        f"Fitted normalisation on {pooled.shape[0]} training samples")
    return stats


def apply_normalizer(frame: FeatureFrame, stats: NormStats) -> FeatureFrame:
    if frame.channels != stats.channels:
        raise ValidationException(
            ValidationExceptionCode.ChannelMismatch,
            f"Frame channels {frame.channels} do not match"
            f" normalisation channels {stats.channels}",
        )
    return replace(frame, values=stats.normalize(frame.values))


def invert_normalizer(frame: FeatureFrame, stats: NormStats) -> FeatureFrame:
    return replace(frame, values=stats.denormalize(frame.values))
