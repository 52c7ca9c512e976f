"""
Synthetic telemetry with planted ground-truth events.

Sessions cruise around a target speed with a slow sinusoidal variation.
Speed is integrated from the longitudinal acceleration sample by sample
(explicit Euler), so ``v[k+1] == v[k] + a_long[k] * dt`` holds exactly before
noise is added. Outside longitudinal events a bounded speed-holding term
pulls the vehicle back to the target profile.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from drivesense.event_class import EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import DriverId, FloatArray, SessionId

from .session import (DEFAULT_SAMPLE_RATE_HZ, SI_UNITS, STANDARD_GRAVITY,
                      TelemetrySession, kmh_to_mps)

RAMP_SECONDS = 0.2
SPEED_PERIOD_SECONDS = 60.0
LATERAL_PERIOD_SECONDS = 25.0
HOLD_GAIN = 0.3  # 1/s
HOLD_LIMIT_G = 0.06
CRUISE_THROTTLE = 0.15
EVENT_PEDAL_BASE = 0.7
EVENT_PEDAL_SPAN = 0.2


@dataclass(frozen=True)
class NoiseSigma:
    speed: float = 0.0
    a_long: float = 0.0
    a_lat: float = 0.0
    brake: float = 0.0
    throttle: float = 0.0


@dataclass(frozen=True)
class PlantedEvent:
    event_class: EventClass
    start: float
    duration: float
    intensity: float  # g

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class SyntheticSpec:
    duration: float
    cruise_speed: float  # km/h
    noise_sigma: NoiseSigma = field(default_factory=NoiseSigma)
    planted_events: tuple[PlantedEvent, ...] = ()
    seed: int = 0
    cruise_variation: float = 3.0  # km/h amplitude
    lateral_sway: float = 0.03  # g amplitude
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    session_id: str = "synthetic-0"
    driver_id: str = "driver-0"

    def __post_init__(self) -> None:
        if self.duration <= 0 or self.cruise_speed < 0:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                f"Invalid synthetic duration/cruise speed :"
                f" {self.duration}s, {self.cruise_speed} km/h",
            )
        if not 0 <= self.seed < 2**64:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                f"Seed must be an unsigned 64-bit integer : {self.seed}",
            )
        for event in self.planted_events:
            if event.event_class == EventClass.Normal:
                raise ValidationException(
                    ValidationExceptionCode.InvalidConfig,
                    "Planted events must be aggressive classes",
                )
            if (
                event.start < 0
                or event.duration <= 0
                or event.end > self.duration
                or event.intensity <= 0
            ):
                raise ValidationException(
                    ValidationExceptionCode.InvalidConfig,
                    f"Planted event outside [0, {self.duration}] or with"
                    f" non-positive duration/intensity : {event}",
                )
        for event_class in EventClass:
            same_class = sorted(
                (e for e in self.planted_events
                 if e.event_class == event_class),
                key=lambda e: e.start,
            )
            for first, second in zip(same_class, same_class[1:]):
                if second.start < first.end:
                    raise ValidationException(
                        ValidationExceptionCode.InvalidConfig,
                        f"Overlapping {event_class.slug} events at"
                        f" {first.start}s and {second.start}s",
                    )


@dataclass(frozen=True)
class GroundTruthEvent:
    event_class: EventClass
    start: float
    end: float


@dataclass(frozen=True)
class GroundTruthEvents:
    events: tuple[GroundTruthEvent, ...] = ()

    def __post_init__(self) -> None:
        for event in self.events:
            if not event.start < event.end:
                raise ValidationException(
                    ValidationExceptionCode.InvalidConfig,
                    f"Ground-truth event with start >= end : {event}",
                )
        starts = [event.start for event in self.events]
        if starts != sorted(starts):
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "Ground-truth events must be sorted by start",
            )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[GroundTruthEvent]:
        return iter(self.events)

    def of_class(self, event_class: EventClass) -> list[GroundTruthEvent]:
        return [e for e in self.events if e.event_class == event_class]


def raised_cosine_envelope(
    t: FloatArray, start: float, duration: float, ramp: float = RAMP_SECONDS
) -> FloatArray:
    """
    1 on the plateau, raised-cosine ramps of ``ramp`` seconds at both ends,
    0 outside ``[start, start + duration)``.
    """
    ramp = min(ramp, duration / 2.0)
    offset = t - start
    rise = np.clip(offset / ramp, 0.0, 1.0)
    fall = np.clip((duration - offset) / ramp, 0.0, 1.0)
    envelope = 0.5 * (1.0 - np.cos(np.pi * np.minimum(rise, fall)))
    inside = (offset >= 0) & (offset < duration)
    return np.where(inside, envelope, 0.0)


def generate_synthetic_session(
    spec: SyntheticSpec,
) -> tuple[TelemetrySession, GroundTruthEvents]:
    dt = 1.0 / spec.sample_rate_hz
    n = max(1, int(round(spec.duration * spec.sample_rate_hz)))
    t = np.arange(n, dtype=np.float64) * dt
    rng = np.random.default_rng(spec.seed)

    cruise = kmh_to_mps(spec.cruise_speed)
    variation = kmh_to_mps(spec.cruise_variation)
    omega = 2.0 * math.pi / SPEED_PERIOD_SECONDS
    target = cruise + variation * np.sin(omega * t)
    target_rate = variation * omega * np.cos(omega * t)

    event_long = np.zeros(n)
    event_lat = np.zeros(n)
    in_long_event = np.zeros(n, dtype=bool)
    brake = np.zeros(n)
    throttle = np.full(n, CRUISE_THROTTLE)
    in_brake_event = np.zeros(n, dtype=bool)

    for event in spec.planted_events:
        envelope = raised_cosine_envelope(t, event.start, event.duration)
        inside = (t >= event.start) & (t < event.end)
        magnitude = event.intensity * STANDARD_GRAVITY * envelope
        pedal = EVENT_PEDAL_BASE + EVENT_PEDAL_SPAN * envelope
        if event.event_class == EventClass.HarshBrake:
            event_long -= magnitude
            in_long_event |= inside
            in_brake_event |= inside
            brake = np.where(inside, np.maximum(brake, pedal), brake)
        elif event.event_class == EventClass.HarshAccel:
            event_long += magnitude
            in_long_event |= inside
            throttle = np.where(inside, np.maximum(throttle, pedal), throttle)
        else:
            event_lat += magnitude
    throttle = np.where(in_brake_event, 0.0, throttle)

    hold_limit = HOLD_LIMIT_G * STANDARD_GRAVITY
    speed = np.empty(n)
    a_long = np.empty(n)
    v = cruise
    for k in range(n):
        speed[k] = v
        if in_long_event[k]:
            a = target_rate[k] + event_long[k]
        else:
            hold = HOLD_GAIN * (target[k] - v)
            a = target_rate[k] + min(max(hold, -hold_limit), hold_limit)
        a_long[k] = a
        v = v + a * dt
        if v < 0:
            raise ValidationException(
                ValidationExceptionCode.InfeasibleEvent,
                f"Session {spec.session_id}: speed would drop below 0 at"
                f" t={t[k]:.2f}s",
            )

    sway = spec.lateral_sway * STANDARD_GRAVITY
    a_lat = sway * np.sin(2.0 * math.pi * t / LATERAL_PERIOD_SECONDS)
    a_lat = a_lat + event_lat

    sigma = spec.noise_sigma
    speed = np.maximum(speed + rng.normal(0.0, sigma.speed, n), 0.0)
    a_long = a_long + rng.normal(0.0, sigma.a_long, n)
    a_lat = a_lat + rng.normal(0.0, sigma.a_lat, n)
    brake = np.clip(brake + rng.normal(0.0, sigma.brake, n), 0.0, 1.0)
    throttle = np.clip(throttle + rng.normal(0.0, sigma.throttle, n), 0.0, 1.0)

    session = TelemetrySession(
        session_id=SessionId(spec.session_id),
        driver_id=DriverId(spec.driver_id),
        t=t,
        speed=speed,
        a_long=a_long,
        a_lat=a_lat,
        brake=brake,
        throttle=throttle,
        sample_rate_hz=spec.sample_rate_hz,
        units=SI_UNITS,
    )
    ground_truth = GroundTruthEvents(tuple(
        GroundTruthEvent(e.event_class, e.start, e.end)
        for e in sorted(
            spec.planted_events, key=lambda e: (e.start, e.event_class))
    ))
    logging.debug(
        f"Generated synthetic session {spec.session_id} with"
        f" {len(ground_truth)} planted events"
    )
    return session, ground_truth


@dataclass(frozen=True)
class SimulationConfig:
    sessions: int = 12
    drivers: int = 4
    duration: float = 180.0
    cruise_speed: float = 50.0
    cruise_variation: float = 3.0
    lateral_sway: float = 0.03
    noise_speed: float = 0.02
    noise_accel: float = 0.2
    noise_pedal: float = 0.01
    events_per_class: int = 1
    min_gap: float = 8.0
    lead_in: float = 5.0
    accel_intensity: tuple[float, float] = (0.45, 0.6)
    brake_intensity: tuple[float, float] = (0.45, 0.6)
    turn_intensity: tuple[float, float] = (0.6, 0.75)
    longitudinal_duration: tuple[float, float] = (0.8, 2.0)
    turn_duration: tuple[float, float] = (2.5, 4.0)
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ


def plan_synthetic_spec(
    cfg: SimulationConfig,
    seed: int,
    session_id: str,
    driver_id: str,
) -> SyntheticSpec:
    """
    Draw a session layout: ``events_per_class`` events of each aggressive
    class in random order, separated by at least ``min_gap`` seconds, with
    the remaining slack spread randomly between them.
    """
    rng = np.random.default_rng(seed)
    classes = [
        event_class
        for event_class in (
            EventClass.HarshAccel, EventClass.HarshBrake, EventClass.HarshTurn)
        for _ in range(cfg.events_per_class)
    ]
    classes = [classes[i] for i in rng.permutation(len(classes))]

    draws = []
    for event_class in classes:
        if event_class == EventClass.HarshTurn:
            duration = rng.uniform(*cfg.turn_duration)
            intensity = rng.uniform(*cfg.turn_intensity)
        elif event_class == EventClass.HarshBrake:
            duration = rng.uniform(*cfg.longitudinal_duration)
            intensity = rng.uniform(*cfg.brake_intensity)
        else:
            duration = rng.uniform(*cfg.longitudinal_duration)
            intensity = rng.uniform(*cfg.accel_intensity)
        draws.append((event_class, float(duration), float(intensity)))

    needed = sum(duration + cfg.min_gap for _, duration, _ in draws)
    slack = cfg.duration - cfg.lead_in - needed
    if slack < 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"simulate.duration={cfg.duration}s cannot hold {len(draws)}"
            f" events separated by {cfg.min_gap}s",
        )
    cuts = np.sort(rng.uniform(0.0, slack, len(draws)))
    shifts = np.diff(np.concatenate(([0.0], cuts)))

    events = []
    cursor = cfg.lead_in
    for (event_class, duration, intensity), shift in zip(draws, shifts):
        cursor += float(shift)
        events.append(PlantedEvent(event_class, cursor, duration, intensity))
        cursor += duration + cfg.min_gap

    return SyntheticSpec(
        duration=cfg.duration,
        cruise_speed=cfg.cruise_speed,
        noise_sigma=NoiseSigma(
            speed=cfg.noise_speed,
            a_long=cfg.noise_accel,
            a_lat=cfg.noise_accel,
            brake=cfg.noise_pedal,
            throttle=cfg.noise_pedal,
        ),
        planted_events=tuple(events),
        seed=seed,
        cruise_variation=cfg.cruise_variation,
        lateral_sway=cfg.lateral_sway,
        sample_rate_hz=cfg.sample_rate_hz,
        session_id=session_id,
        driver_id=driver_id,
    )


def simulate_fleet(
    cfg: SimulationConfig, seed: int
) -> list[tuple[TelemetrySession, GroundTruthEvents]]:
    """Sessions are dealt round-robin to ``cfg.drivers`` drivers."""
    session_seeds = np.random.SeedSequence(seed).generate_state(
        cfg.sessions, dtype=np.uint64)
    fleet = []
    for index, session_seed in enumerate(session_seeds):
        spec = plan_synthetic_spec(
            cfg,
            int(session_seed),
            session_id=f"session-{index:03d}",
            driver_id=f"driver-{index % max(cfg.drivers, 1):02d}",
        )
        fleet.append(generate_synthetic_session(spec))
    logging.info(
        f"Simulated {len(fleet)} sessions for {cfg.drivers} drivers")
    return fleet


def save_ground_truth(events: GroundTruthEvents, path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "class": [e.event_class.slug for e in events],
            "start_s": [e.start for e in events],
            "end_s": [e.end for e in events],
        },
        columns=["class", "start_s", "end_s"],
    )
    frame.to_csv(path, index=False)


def load_ground_truth(path: str | Path) -> GroundTruthEvents:
    frame = pd.read_csv(path, skipinitialspace=True)
    missing = {"class", "start_s", "end_s"} - set(frame.columns)
    if missing:
        raise ValidationException(
            ValidationExceptionCode.MissingColumn,
            f"{path}: missing ground-truth columns {sorted(missing)}",
        )
    events = sorted(
        (
            GroundTruthEvent(
                EventClass.from_slug(str(row["class"])),
                float(row["start_s"]),
                float(row["end_s"]),
            )
            for _, row in frame.iterrows()
        ),
        key=lambda e: (e.start, e.event_class),
    )
    return GroundTruthEvents(tuple(events))
