"""
Telemetry sessions: the validated, immutable container every later stage
consumes, plus CSV ingestion/emission and unit normalisation.

Canonical internal units are SI (m/s, m/s²). Files carry km/h, g and pedal
percentages; pedals become fractions at ingestion, speed and accelerations
are converted by :func:`convert_units`.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import DriverId, FloatArray, SessionId

STANDARD_GRAVITY = 9.80665
KMH_PER_MPS = 3.6
DEFAULT_SAMPLE_RATE_HZ = 25.0
SAMPLING_TOLERANCE = 0.10

CHANNELS = ("speed", "a_long", "a_lat", "brake", "throttle")


class SpeedUnit(Enum):
    kmh = "km/h"
    mps = "m/s"


class AccelUnit(Enum):
    g = "g"
    mps2 = "m/s2"


@dataclass(frozen=True)
class UnitSystem:
    speed: SpeedUnit = SpeedUnit.mps
    accel: AccelUnit = AccelUnit.mps2

    @property
    def is_si(self) -> bool:
        return self.speed == SpeedUnit.mps and self.accel == AccelUnit.mps2


SI_UNITS = UnitSystem(SpeedUnit.mps, AccelUnit.mps2)
FILE_UNITS = UnitSystem(SpeedUnit.kmh, AccelUnit.g)


@dataclass(frozen=True)
class TelemetrySample:
    t: float
    speed: float
    a_long: float
    a_lat: float
    brake: float
    throttle: float


@dataclass(frozen=True, eq=False)
class TelemetrySession:
    session_id: SessionId
    driver_id: DriverId
    t: FloatArray
    speed: FloatArray
    a_long: FloatArray
    a_lat: FloatArray
    brake: FloatArray
    throttle: FloatArray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    units: UnitSystem = field(default=SI_UNITS)

    def __post_init__(self) -> None:
        for name in ("t",) + CHANNELS:
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        _validate_session(self)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def samples(self) -> tuple[TelemetrySample, ...]:
        return tuple(
            TelemetrySample(*(float(v) for v in row))
            for row in zip(
                self.t, self.speed, self.a_long,
                self.a_lat, self.brake, self.throttle)
        )

    def channel(self, name: str) -> FloatArray:
        return getattr(self, name)


@dataclass(frozen=True)
class ColumnSchema:
    time: str = "time_s"
    speed: str = "speed_kmh"
    a_long: str = "accel_long_g"
    a_lat: str = "accel_lat_g"
    brake: str = "brake_pct"
    throttle: str = "throttle_pct"
    session_id: str = "session_id"
    driver_id: str = "driver_id"
    units: UnitSystem = FILE_UNITS
    pedal_scale: float = 100.0

    def numeric_columns(self) -> dict[str, str]:
        return {
            "t": self.time,
            "speed": self.speed,
            "a_long": self.a_long,
            "a_lat": self.a_lat,
            "brake": self.brake,
            "throttle": self.throttle,
        }

    def header(self) -> list[str]:
        return list(self.numeric_columns().values()) + [
            self.session_id, self.driver_id]


DEFAULT_SCHEMA = ColumnSchema()


def _validate_session(session: TelemetrySession) -> None:
    n = len(session.t)
    if n < 1:
        raise ValidationException(
            ValidationExceptionCode.InvalidSample,
            f"Session {session.session_id} has no samples",
        )
    for name in CHANNELS:
        if len(session.channel(name)) != n:
            raise ValidationException(
                ValidationExceptionCode.InvalidSample,
                f"Channel {name} has {len(session.channel(name))} samples,"
                f" expected {n}",
            )
    rate = session.sample_rate_hz
    if rate <= 0 or not math.isfinite(rate):
        raise ValidationException(
            ValidationExceptionCode.InvalidSample,
            f"Invalid sample rate : {session.sample_rate_hz}",
        )
    for name in ("t",) + CHANNELS:
        bad = np.flatnonzero(~np.isfinite(session.channel(name)))
        if len(bad) > 0:
            raise ValidationException(
                ValidationExceptionCode.InvalidSample,
                f"Non finite value at sample {bad[0]} of channel {name}",
            )
    bad = np.flatnonzero(session.speed < 0)
    if len(bad) > 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidSample,
            f"Negative speed at sample {bad[0]}",
        )
    for name in ("brake", "throttle"):
        values = session.channel(name)
        bad = np.flatnonzero((values < 0) | (values > 1))
        if len(bad) > 0:
            raise ValidationException(
                ValidationExceptionCode.InvalidSample,
                f"Pedal {name} outside [0, 1] at sample {bad[0]}"
                f" : {values[bad[0]]}",
            )
    check_time_axis(session.t, session.sample_rate_hz)


def check_time_axis(t: FloatArray, sample_rate_hz: float) -> None:
    if len(t) < 2:
        return
    spacing = np.diff(t)
    bad = np.flatnonzero(spacing <= 0)
    if len(bad) > 0:
        row = int(bad[0]) + 1
        raise ValidationException(
            ValidationExceptionCode.NonMonotonicTime,
            f"Timestamp not strictly increasing at row {row}"
            f" (t={t[row]}, previous t={t[row - 1]})",
        )
    expected = 1.0 / sample_rate_hz
    bad = np.flatnonzero(
        np.abs(spacing - expected) > SAMPLING_TOLERANCE * expected)
    if len(bad) > 0:
        row = int(bad[0]) + 1
        raise ValidationException(
            ValidationExceptionCode.NonUniformSampling,
            f"Sample spacing {spacing[bad[0]]:.6f}s at row {row} deviates"
            f" more than {SAMPLING_TOLERANCE:.0%} from {expected:.6f}s",
        )


def infer_sample_rate(t: FloatArray) -> float:
    if len(t) < 2:
        return DEFAULT_SAMPLE_RATE_HZ
    spacing = np.diff(t)
    spacing = spacing[spacing > 0]
    if len(spacing) == 0:
        # left to session validation, which names the offending row
        return DEFAULT_SAMPLE_RATE_HZ
    median_spacing = float(np.median(spacing))
    return round(1.0 / median_spacing, 6)


def load_csv_session(
    path: str | Path, schema: ColumnSchema = DEFAULT_SCHEMA
) -> TelemetrySession:
    """
    Read one session from a CSV file, keeping the file's speed and
    acceleration units (recorded in ``session.units``). Pedal columns are
    divided by ``schema.pedal_scale``.
    """
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    frame.columns = [str(column).strip() for column in frame.columns]
    for column in schema.header():
        if column not in frame.columns:
            raise ValidationException(
                ValidationExceptionCode.MissingColumn,
                f"{path}: missing required column '{column}'",
            )
    if len(frame) == 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidSample,
            f"{path}: no data rows",
        )

    arrays: dict[str, FloatArray] = {}
    for name, column in schema.numeric_columns().items():
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if len(bad) > 0:
            row = int(bad[0])
            raise ValidationException(
                ValidationExceptionCode.UnparsableValue,
                f"{path}: row {row} column '{column}' :"
                f" cannot parse {raw.iloc[row]!r}",
            )
        arrays[name] = parsed.to_numpy(dtype=np.float64)

    arrays["brake"] = arrays["brake"] / schema.pedal_scale
    arrays["throttle"] = arrays["throttle"] / schema.pedal_scale

    session_id = _single_id(frame, schema.session_id, path)
    driver_id = _single_id(frame, schema.driver_id, path)

    session = TelemetrySession(
        session_id=SessionId(session_id),
        driver_id=DriverId(driver_id),
        sample_rate_hz=infer_sample_rate(arrays["t"]),
        units=schema.units,
        **arrays,
    )
    logging.debug(
        f"Loaded session {session.session_id} ({len(session)} samples"
        f" at {session.sample_rate_hz} Hz) from {path}"
    )
    return session


def _single_id(frame: pd.DataFrame, column: str, path: str | Path) -> str:
    values = frame[column].str.strip().unique()
    if len(values) != 1:
        raise ValidationException(
            ValidationExceptionCode.MixedSessionIds,
            f"{path}: column '{column}' must hold a single value,"
            f" found {len(values)}",
        )
    return str(values[0])


def save_csv_session(
    session: TelemetrySession,
    path: str | Path,
    schema: ColumnSchema = DEFAULT_SCHEMA,
) -> None:
    file_session = convert_units(session)
    speed = file_session.speed
    a_long = file_session.a_long
    a_lat = file_session.a_lat
    if schema.units.speed == SpeedUnit.kmh:
        speed = speed * KMH_PER_MPS
    if schema.units.accel == AccelUnit.g:
        a_long = a_long / STANDARD_GRAVITY
        a_lat = a_lat / STANDARD_GRAVITY
    columns = schema.numeric_columns()
    frame = pd.DataFrame({
        columns["t"]: file_session.t,
        columns["speed"]: speed,
        columns["a_long"]: a_long,
        columns["a_lat"]: a_lat,
        columns["brake"]: file_session.brake * schema.pedal_scale,
        columns["throttle"]: file_session.throttle * schema.pedal_scale,
        schema.session_id: session.session_id,
        schema.driver_id: session.driver_id,
    })
    frame.to_csv(path, index=False)


def convert_units(
    session: TelemetrySession, input_units: UnitSystem | None = None
) -> TelemetrySession:
    """
    Return the session in SI units. ``input_units`` declares what the
    session's channels hold and takes precedence over ``session.units``.
    """
    units = session.units if input_units is None else input_units
    speed_factor = 1.0 / KMH_PER_MPS if units.speed == SpeedUnit.kmh else 1.0
    accel_factor = STANDARD_GRAVITY if units.accel == AccelUnit.g else 1.0
    return replace(
        session,
        speed=session.speed * speed_factor,
        a_long=session.a_long * accel_factor,
        a_lat=session.a_lat * accel_factor,
        units=SI_UNITS,
    )


def g_to_mps2(value: float) -> float:
    return value * STANDARD_GRAVITY


def kmh_to_mps(value: float) -> float:
    return value / KMH_PER_MPS


def require_si(session: TelemetrySession) -> None:
    if not session.units.is_si:
        raise ValidationException(
            ValidationExceptionCode.InvalidSample,
            f"Session {session.session_id} is not in SI units"
            f" ({session.units.speed.value}, {session.units.accel.value})",
        )


def seconds_to_samples(seconds: float, sample_rate_hz: float) -> int:
    return int(round(seconds * sample_rate_hz))
