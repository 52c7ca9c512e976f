from dataclasses import dataclass

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.telemetry.session import g_to_mps2, kmh_to_mps


@dataclass(frozen=True)
class LabellerConfig:
    """
    Thresholds are stored in the units the config file uses (g, km/h,
    seconds, pedal fractions); the ``*_si`` properties convert on use.
    """

    theta_brake: float = -0.35
    theta_accel: float = 0.38
    theta_turn: float = 0.55
    theta_speed: float = -0.35
    v_min: float = 15.0
    v_turn: float = 30.0
    W_s: float = 4.0
    T_min: float = 0.4
    closing_width: float = 0.5
    expansion: float = 0.5
    rescue_brake_pedal: float = 0.6
    rescue_brake_factor: float = 0.9
    throttle_intent: float = 0.3
    brake_inactive: float = 0.05

    def __post_init__(self) -> None:
        problems = []
        if not self.theta_brake < 0:
            problems.append("theta_brake must be < 0")
        if not self.theta_speed < 0:
            problems.append("theta_speed must be < 0")
        if not (self.theta_accel > 0 and self.theta_turn > 0):
            problems.append("theta_accel and theta_turn must be > 0")
        if not self.W_s > self.T_min > 0:
            problems.append("expected W_s > T_min > 0")
        if not self.v_turn > self.v_min:
            problems.append("expected v_turn > v_min")
        if self.closing_width < 0 or self.expansion < 0:
            problems.append("closing_width and expansion must be >= 0")
        if problems:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "labeller: " + "; ".join(problems),
            )

    @property
    def theta_brake_si(self) -> float:
        return g_to_mps2(self.theta_brake)

    @property
    def theta_accel_si(self) -> float:
        return g_to_mps2(self.theta_accel)

    @property
    def theta_turn_si(self) -> float:
        return g_to_mps2(self.theta_turn)

    @property
    def theta_speed_si(self) -> float:
        return g_to_mps2(self.theta_speed)

    @property
    def v_min_si(self) -> float:
        return kmh_to_mps(self.v_min)

    @property
    def v_turn_si(self) -> float:
        return kmh_to_mps(self.v_turn)
