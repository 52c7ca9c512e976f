from dataclasses import dataclass

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.telemetry.session import (g_to_mps2, kmh_to_mps,
                                          seconds_to_samples)

SPLIT_PROTOCOLS = ("stratified", "session", "driver")


@dataclass(frozen=True)
class WindowConfig:
    W: float = 4.0
    S: float = 1.0
    H: float = 0.0
    vote_fraction: float = 0.125
    override_decel_g: float = 0.45
    override_lat_g: float = 0.60
    override_accel_g: float = 0.45
    override_pedal: float = 0.5
    override_v_min_kmh: float = 15.0
    override_v_turn_kmh: float = 30.0
    split_protocol: str = "driver"
    train_ratio: float = 0.70
    validation_ratio: float = 0.15
    test_ratio: float = 0.15

    def __post_init__(self) -> None:
        problems = []
        if not self.W > 0:
            problems.append("W must be > 0")
        if not 0 < self.S <= self.W:
            problems.append("expected 0 < S <= W")
        if not self.H >= 0:
            problems.append("H must be >= 0")
        if not 0 < self.vote_fraction <= 0.5:
            problems.append("vote_fraction must lie in (0, 0.5]")
        if self.split_protocol not in SPLIT_PROTOCOLS:
            problems.append(
                f"split_protocol must be one of {', '.join(SPLIT_PROTOCOLS)}")
        if abs(sum(self.ratios) - 1.0) > 1e-9 or min(self.ratios) < 0:
            problems.append("split ratios must be >= 0 and sum to 1")
        if problems:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "window: " + "; ".join(problems),
            )

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.validation_ratio, self.test_ratio)

    def rows(self, sample_rate_hz: float) -> int:
        return max(1, seconds_to_samples(self.W, sample_rate_hz))

    def stride_rows(self, sample_rate_hz: float) -> int:
        return max(1, seconds_to_samples(self.S, sample_rate_hz))

    def horizon_rows(self, sample_rate_hz: float) -> int:
        return seconds_to_samples(self.H, sample_rate_hz)

    @property
    def decel_si(self) -> float:
        return g_to_mps2(self.override_decel_g)

    @property
    def lat_si(self) -> float:
        return g_to_mps2(self.override_lat_g)

    @property
    def accel_si(self) -> float:
        return g_to_mps2(self.override_accel_g)

    @property
    def v_min_si(self) -> float:
        return kmh_to_mps(self.override_v_min_kmh)

    @property
    def v_turn_si(self) -> float:
        return kmh_to_mps(self.override_v_turn_kmh)
