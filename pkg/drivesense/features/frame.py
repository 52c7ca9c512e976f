import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.telemetry.session import TelemetrySession, require_si
from drivesense.typing import DriverId, FloatArray, SessionId

RAW_CHANNELS = ("speed", "a_long", "a_lat", "brake", "throttle")
ENGINEERED_CHANNELS = (
    "a_long_neg", "turn_sharpness", "a_lat_smooth", "p_decel", "b_engage")
FEATURE_CHANNELS = RAW_CHANNELS + ENGINEERED_CHANNELS
NUM_FEATURES = len(FEATURE_CHANNELS)

SMOOTHING_SAMPLES = 5


class SplitTag(Enum):
    unassigned = "unassigned"
    train = "train"
    validation = "validation"
    test = "test"


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    values: FloatArray  # (samples, channels)
    session_id: SessionId
    driver_id: DriverId
    sample_rate_hz: float
    channels: tuple[str, ...] = FEATURE_CHANNELS
    split_tag: SplitTag = SplitTag.unassigned
    t0: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.channels):
            raise ExecutionException(
                ExecutionExceptionCode.ShapeMismatch,
                f"Feature frame of shape {values.shape} does not match"
                f" {len(self.channels)} channels",
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    def channel(self, name: str) -> FloatArray:
        try:
            return self.values[:, self.channels.index(name)]
        except ValueError:
            raise ValidationException(
                ValidationExceptionCode.ChannelMismatch,
                f"Unknown channel {name!r}",
            )

    def tagged(self, split_tag: SplitTag) -> "FeatureFrame":
        return replace(self, split_tag=split_tag)


def trailing_mean(signal: FloatArray, samples: int) -> FloatArray:
    """Mean of the last ``samples`` values, start padded with the first."""
    padded = np.concatenate((np.full(samples - 1, signal[0]), signal))
    return sliding_window_view(padded, samples).mean(axis=1)


def engineer_features(session: TelemetrySession) -> FeatureFrame:
    require_si(session)
    a_long_neg = np.maximum(0.0, -session.a_long)
    turn_sharpness = np.zeros(len(session))
    turn_sharpness[1:] = np.abs(np.diff(session.a_lat))
    a_lat_smooth = trailing_mean(session.a_lat, SMOOTHING_SAMPLES)
    p_decel = session.speed * a_long_neg
    b_engage = session.brake * a_long_neg

    values = np.column_stack((
        session.speed,
        session.a_long,
        session.a_lat,
        session.brake,
        session.throttle,
        a_long_neg,
        turn_sharpness,
        a_lat_smooth,
        p_decel,
        b_engage,
    ))
    logging.debug(
        f"Engineered {NUM_FEATURES} channels for session {session.session_id}")
    return FeatureFrame(
        values=values,
        session_id=session.session_id,
        driver_id=session.driver_id,
        sample_rate_hz=session.sample_rate_hz,
        t0=float(session.t[0]),
    )


def save_feature_csv(frame: FeatureFrame, path: str | Path) -> None:
    table = pd.DataFrame(frame.values, columns=list(frame.channels))
    table.insert(
        0, "time_s", frame.t0 + np.arange(len(frame)) / frame.sample_rate_hz)
    table.to_csv(path, index=False)
