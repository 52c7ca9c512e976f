from dataclasses import dataclass

from drivesense.event_class import NUM_CLASSES
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)


def _invalid(section: str, problems: list[str]) -> ValidationException:
    return ValidationException(
        ValidationExceptionCode.InvalidConfig,
        f"{section}: " + "; ".join(problems),
    )


@dataclass(frozen=True)
class LossSettings:
    """Per-class weights ``alpha`` and focusing exponents ``gamma``."""

    alpha: tuple[float, ...] = (1.0,) * NUM_CLASSES
    gamma: tuple[float, ...] = (0.0,) * NUM_CLASSES

    def __post_init__(self) -> None:
        problems = []
        if len(self.alpha) != NUM_CLASSES or min(self.alpha) <= 0:
            problems.append(f"alpha needs {NUM_CLASSES} positive weights")
        if len(self.gamma) != NUM_CLASSES or min(self.gamma) < 0:
            problems.append(f"gamma needs {NUM_CLASSES} values >= 0")
        if problems:
            raise _invalid("train", problems)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 300
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if not self.lr > 0:
            problems.append("lr must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            problems.append("betas must lie in (0, 1)")
        if not self.eps > 0 or self.weight_decay < 0:
            problems.append("expected eps > 0 and weight_decay >= 0")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.max_epochs < 1:
            problems.append("max_epochs must be >= 1")
        if problems:
            raise _invalid("train", problems)


@dataclass(frozen=True)
class ScheduleConfig:
    early_stop_patience: int = 20
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    min_lr: float = 1e-5
    min_delta: float = 0.0
    record_timing: bool = False

    def __post_init__(self) -> None:
        problems = []
        if self.early_stop_patience < 1 or self.plateau_patience < 1:
            problems.append("patience values must be >= 1")
        if not 0 < self.plateau_factor < 1:
            problems.append("plateau_factor must lie in (0, 1)")
        if not self.min_lr > 0 or self.min_delta < 0:
            problems.append("expected min_lr > 0 and min_delta >= 0")
        if problems:
            raise _invalid("train", problems)
