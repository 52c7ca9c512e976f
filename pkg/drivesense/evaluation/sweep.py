"""
Retraining sweeps over window length, prediction horizon and focal gamma.
Each cell re-windows, re-splits and retrains with a reduced epoch budget.
"""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence, TypeVar

from drivesense.event_class import NUM_CLASSES
from drivesense.imbalance.smote import SmoteConfig
from drivesense.network.config import NetworkConfig
from drivesense.pipeline import (LabelledSession, derive_seeds, fit_model,
                                 prepare_data, split_windows, window_sessions)
from drivesense.training.config import OptimizerConfig, ScheduleConfig
from drivesense.windowing.config import WindowConfig

from .report import MetricsReport, evaluate

Point = TypeVar("Point")


@dataclass(frozen=True)
class ExperimentSettings:
    window: WindowConfig
    smote: SmoteConfig
    model: NetworkConfig
    gamma: tuple[float, ...]
    optimizer: OptimizerConfig
    schedule: ScheduleConfig
    beta: float = 2.0
    base_seed: int = 0

    def with_epoch_budget(self, epochs: int) -> "ExperimentSettings":
        return replace(
            self,
            optimizer=replace(
                self.optimizer,
                max_epochs=min(self.optimizer.max_epochs, epochs)),
        )


@dataclass(frozen=True)
class WindowHorizonPoint:
    W: float
    H: float
    seed: int
    macro_f2: float


@dataclass(frozen=True)
class GammaPoint:
    gamma: float
    seed: int
    macro_f2: float
    weighted_f2: float
    accuracy: float
    macro_auc: float


def run_experiment(
    labelled: Sequence[LabelledSession],
    settings: ExperimentSettings,
    seed: int,
) -> MetricsReport:
    """Window, split, train and score on the held-out test side."""
    seeds = derive_seeds(settings.base_seed, seed)
    windows = window_sessions(labelled, settings.window)
    split = split_windows(windows, settings.window, seeds.split)
    data = prepare_data(windows, split, settings.smote, seeds)
    model, _ = fit_model(
        data, settings.model, settings.gamma, settings.optimizer,
        settings.schedule, seeds)
    report, _, _ = evaluate(model, data.test, beta=settings.beta)
    return report


def _window_horizon_cells(
    settings: ExperimentSettings,
    windows: Sequence[float],
    horizons: Sequence[float],
    seeds: Sequence[int],
) -> list[tuple[float, float, int, ExperimentSettings]]:
    return [
        (W, H, seed, replace(
            settings, window=replace(settings.window, W=W, H=H,
                                     S=min(settings.window.S, W))))
        for W in windows
        for H in horizons
        for seed in seeds
    ]


def _window_horizon_point(
    labelled: Sequence[LabelledSession],
    cell: tuple[float, float, int, ExperimentSettings],
) -> WindowHorizonPoint:
    W, H, seed, settings = cell
    report = run_experiment(labelled, settings, seed)
    logging.info(
        f"Sweep cell W={W} H={H} seed={seed}: {report.macro_f2:.4f}")
    return WindowHorizonPoint(W, H, seed, report.macro_f2)


def _gamma_cells(
    settings: ExperimentSettings,
    gammas: Sequence[float],
    seeds: Sequence[int],
) -> list[tuple[float, int, ExperimentSettings]]:
    return [
        (gamma, seed, replace(settings, gamma=(gamma,) * NUM_CLASSES))
        for gamma in gammas
        for seed in seeds
    ]


def _gamma_point(
    labelled: Sequence[LabelledSession],
    cell: tuple[float, int, ExperimentSettings],
) -> GammaPoint:
    gamma, seed, settings = cell
    report = run_experiment(labelled, settings, seed)
    logging.info(
        f"Sweep cell gamma={gamma} seed={seed}: {report.macro_f2:.4f}")
    return GammaPoint(
        gamma, seed, report.macro_f2, report.weighted_f2, report.accuracy,
        report.macro_auc,
    )


def sweep_window_horizon(
    labelled: Sequence[LabelledSession],
    settings: ExperimentSettings,
    windows: Sequence[float],
    horizons: Sequence[float],
    seeds: Sequence[int],
) -> list[WindowHorizonPoint]:
    """Rows come back in (W, H, seed) grid order."""
    return [
        _window_horizon_point(labelled, cell)
        for cell in _window_horizon_cells(settings, windows, horizons, seeds)
    ]


def sweep_gamma(
    labelled: Sequence[LabelledSession],
    settings: ExperimentSettings,
    gammas: Sequence[float],
    seeds: Sequence[int],
) -> list[GammaPoint]:
    """A scalar gamma is applied to every class."""
    return [
        _gamma_point(labelled, cell)
        for cell in _gamma_cells(settings, gammas, seeds)
    ]


async def _run_cells(
    worker: Callable[..., Point],
    labelled: Sequence[LabelledSession],
    cells: Sequence[object],
    workers: int,
) -> list[Point]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as executor:

        async def run(cell: object) -> Point:
            return await loop.run_in_executor(
                executor, worker, labelled, cell)

        async with asyncio.TaskGroup() as task_group:
            tasks = [task_group.create_task(run(cell)) for cell in cells]
    return [task.result() for task in tasks]


async def sweep_window_horizon_async(
    labelled: Sequence[LabelledSession],
    settings: ExperimentSettings,
    windows: Sequence[float],
    horizons: Sequence[float],
    seeds: Sequence[int],
    workers: int,
) -> list[WindowHorizonPoint]:
    """Cells run concurrently; results keep grid order."""
    cells = _window_horizon_cells(settings, windows, horizons, seeds)
    return await _run_cells(_window_horizon_point, labelled, cells, workers)


async def sweep_gamma_async(
    labelled: Sequence[LabelledSession],
    settings: ExperimentSettings,
    gammas: Sequence[float],
    seeds: Sequence[int],
    workers: int,
) -> list[GammaPoint]:
    cells = _gamma_cells(settings, gammas, seeds)
    return await _run_cells(_gamma_point, labelled, cells, workers)
