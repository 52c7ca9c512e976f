from dataclasses import dataclass

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)

MIN_BENCH_WINDOWS = 100
MIN_BENCH_WARMUP = 10


@dataclass(frozen=True)
class EvalConfig:
    beta: float = 2.0
    calibrate: bool = False
    calibration_grid: tuple[float, ...] = (
        0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0)
    bench_windows: int = 1000
    bench_warmup: int = 50
    sweep_windows: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    sweep_horizons: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0)
    sweep_seeds: tuple[int, ...] = (0, 1, 2)
    sweep_epochs: int = 50
    sweep_workers: int = 4
    gamma_grid: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)

    def __post_init__(self) -> None:
        problems = []
        if not self.beta > 0:
            problems.append("beta must be > 0")
        if len(self.calibration_grid) == 0 or min(self.calibration_grid) <= 0:
            problems.append("calibration_grid needs positive scales")
        if self.bench_windows < MIN_BENCH_WINDOWS:
            problems.append(f"bench_windows must be >= {MIN_BENCH_WINDOWS}")
        if self.bench_warmup < MIN_BENCH_WARMUP:
            problems.append(f"bench_warmup must be >= {MIN_BENCH_WARMUP}")
        if min(self.sweep_windows, default=0) <= 0:
            problems.append("sweep_windows must be positive")
        if min(self.sweep_horizons, default=-1) < 0:
            problems.append("sweep_horizons must be >= 0")
        if len(self.sweep_seeds) == 0:
            problems.append("sweep_seeds must not be empty")
        if self.sweep_epochs < 1 or self.sweep_workers < 1:
            problems.append("sweep_epochs and sweep_workers must be >= 1")
        if min(self.gamma_grid, default=-1) < 0:
            problems.append("gamma_grid must be >= 0")
        if problems:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "eval: " + "; ".join(problems),
            )
