"""
Rule-based per-sample labelling of aggressive driving events.

Candidates come from physical thresholds on rolling extrema of the
dynamics, are cleaned up per class by binary morphology, and collapse to a
single label per sample through the fixed turn > brake > accel priority.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from drivesense.event_class import AGGRESSIVE_PRIORITY, EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.telemetry.session import (TelemetrySession, require_si,
                                          seconds_to_samples)
from drivesense.typing import BoolArray, FloatArray, IntArray

from .config import LabellerConfig


class Extremum(Enum):
    max = "max"
    min = "min"
    abs_max = "abs-max"


@dataclass(frozen=True)
class EventMask:
    harsh_accel: BoolArray
    harsh_brake: BoolArray
    harsh_turn: BoolArray

    def __post_init__(self) -> None:
        if not len(self.harsh_accel) == len(self.harsh_brake) == len(
                self.harsh_turn):
            raise ValidationException(
                ValidationExceptionCode.InvalidSample,
                "Event masks must have equal lengths",
            )

    def __len__(self) -> int:
        return len(self.harsh_accel)

    def of_class(self, event_class: EventClass) -> BoolArray:
        if event_class == EventClass.HarshAccel:
            return self.harsh_accel
        if event_class == EventClass.HarshBrake:
            return self.harsh_brake
        if event_class == EventClass.HarshTurn:
            return self.harsh_turn
        raise ValueError(f"No mask for {event_class.name}")


def rolling_extrema(
    signal: FloatArray, window: int, mode: Extremum | str = Extremum.max
) -> FloatArray:
    """
    Trailing extremum over samples ``max(0, t - window + 1) .. t``.
    Partial windows at the start use the samples available.
    """
    mode = Extremum(mode)
    values = np.asarray(signal, dtype=np.float64)
    if len(values) == 0:
        raise ValidationException(
            ValidationExceptionCode.EmptySignal,
            "Cannot compute rolling extrema of an empty signal",
        )
    if window < 1:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"Rolling window must hold at least one sample : {window}",
        )
    if mode == Extremum.abs_max:
        values = np.abs(values)
    fill = np.inf if mode == Extremum.min else -np.inf
    padded = np.concatenate((np.full(window - 1, fill), values))
    view = sliding_window_view(padded, window)
    if mode == Extremum.min:
        return view.min(axis=1)
    return view.max(axis=1)


def speed_derived_accel(speed: FloatArray, dt: float) -> FloatArray:
    if dt <= 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"dt must be positive : {dt}",
        )
    speed = np.asarray(speed, dtype=np.float64)
    derived = np.zeros_like(speed)
    derived[1:] = np.diff(speed) / dt
    return derived


def detect_candidates(
    session: TelemetrySession, cfg: LabellerConfig
) -> EventMask:
    require_si(session)
    window = max(1, seconds_to_samples(cfg.W_s, session.sample_rate_hz))
    moving = session.speed > cfg.v_min_si

    a_speed_min = rolling_extrema(
        speed_derived_accel(session.speed, session.dt), window, Extremum.min)
    braking = (
        moving
        & (a_speed_min <= cfg.theta_speed_si)
        & (session.a_long <= cfg.theta_brake_si)
    )
    rescue = (
        moving
        & (session.brake >= cfg.rescue_brake_pedal)
        & (session.a_long <= cfg.rescue_brake_factor * cfg.theta_brake_si)
    )
    braking = braking | rescue

    a_long_max = rolling_extrema(session.a_long, window, Extremum.max)
    accelerating = (
        moving
        & (a_long_max >= cfg.theta_accel_si)
        & (session.throttle >= cfg.throttle_intent)
        & (session.brake < cfg.brake_inactive)
    )

    a_lat_max = rolling_extrema(session.a_lat, window, Extremum.abs_max)
    turning = (
        (session.speed > cfg.v_turn_si) & (a_lat_max >= cfg.theta_turn_si))

    return EventMask(
        harsh_accel=accelerating,
        harsh_brake=braking,
        harsh_turn=turning,
    )


def _drop_short_runs(mask: BoolArray, min_samples: int) -> BoolArray:
    runs, count = ndimage.label(mask)
    if count == 0:
        return mask
    sizes = np.bincount(runs.ravel())
    keep = sizes >= min_samples
    keep[0] = False
    return keep[runs]


def _odd_structure(samples: int) -> BoolArray:
    half = max(samples, 1) // 2
    return np.ones(2 * half + 1, dtype=bool)


def refine_mask(mask: BoolArray, cfg: LabellerConfig, dt: float) -> BoolArray:
    """
    Closing, duration filter, symmetric expansion, duration filter.
    Edges count as "inside" for the erosion half of the closing so runs
    touching the sequence bounds are not trimmed.
    """
    rate = 1.0 / dt
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    min_samples = max(1, seconds_to_samples(cfg.T_min, rate))

    closing = seconds_to_samples(cfg.closing_width, rate)
    if closing > 1:
        structure = _odd_structure(closing)
        refined = ndimage.binary_dilation(mask, structure=structure)
        refined = ndimage.binary_erosion(
            refined, structure=structure, border_value=1)
        refined |= mask
    else:
        refined = mask.copy()

    refined = _drop_short_runs(refined, min_samples)

    expansion = seconds_to_samples(cfg.expansion, rate)
    if expansion > 0 and refined.any():
        refined = ndimage.binary_dilation(
            refined, structure=np.ones(2 * expansion + 1, dtype=bool))

    return _drop_short_runs(refined, min_samples)


def resolve_priority(mask: EventMask) -> IntArray:
    labels = np.full(len(mask), int(EventClass.Normal), dtype=np.int64)
    # lowest priority first so higher classes overwrite
    for event_class in reversed(AGGRESSIVE_PRIORITY):
        labels[mask.of_class(event_class)] = int(event_class)
    return labels


def label_session(session: TelemetrySession, cfg: LabellerConfig) -> IntArray:
    candidates = detect_candidates(session, cfg)
    refined = EventMask(
        harsh_accel=refine_mask(candidates.harsh_accel, cfg, session.dt),
        harsh_brake=refine_mask(candidates.harsh_brake, cfg, session.dt),
        harsh_turn=refine_mask(candidates.harsh_turn, cfg, session.dt),
    )
    labels = resolve_priority(refined)
    counts = np.bincount(labels, minlength=len(EventClass))
    logging.debug(
        f"Labelled session {session.session_id}: "
        + ", ".join(f"{c.slug}={counts[c]}" for c in EventClass)
    )
    return labels
