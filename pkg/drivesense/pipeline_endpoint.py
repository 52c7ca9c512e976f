"""
Subcommand dispatch. Every ``cmd_<name>`` coroutine of
:class:`PipelineEndpoint` is registered under ``<name>``; a run writes the
resolved configuration and run information before the command and the
metrics file after it.
"""

import inspect
import json
import logging
from pathlib import Path
from typing import Awaitable, Callable

from drivesense.cli_manager import (InitData, SweepGrid,
                                    write_run_artifacts)
from drivesense.evaluation.latency import latency_benchmark
from drivesense.evaluation.report import (UNIT_SCALES,
                                          calibrate_class_scales, evaluate,
                                          save_probabilities)
from drivesense.evaluation.sweep import (ExperimentSettings,
                                         sweep_gamma_async,
                                         sweep_window_horizon_async)
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.frame import (SplitTag, engineer_features,
                                       save_feature_csv)
from drivesense.features.normalizer import NormStats, fit_normalizer
from drivesense.labelling.labeller import label_session
from drivesense.labelling.verification import (EventComparison,
                                               compare_events,
                                               merge_comparisons, save_labels)
from drivesense.metrics.metrics import write_metrics
from drivesense.network.checkpoint import load_checkpoint, save_checkpoint
from drivesense.network.model import build_model, predict_proba
from drivesense.pipeline import (derive_seeds, emit_plot_data, fit_model,
                                 label_sessions, normalize_windows,
                                 pad_windows, prepare_data, split_windows,
                                 window_sessions)
from drivesense.telemetry.session import (TelemetrySession, convert_units,
                                          load_csv_session, save_csv_session)
from drivesense.telemetry.synthetic import (load_ground_truth,
                                            save_ground_truth, simulate_fleet)
from drivesense.windowing.splits import (MIN_GROUPS, DataSplit,
                                         SplitProtocol, leave_one_driver_out,
                                         require_valid_split)
from drivesense.windowing.window_set import (WindowSet, load_window_set,
                                             save_window_set)

CommandFunction = Callable[[], Awaitable[None]]

WINDOWS_FILE = "windows.bin"
SPLIT_FILE = "split.json"
CHECKPOINT_FILE = "checkpoint.bin"
METRICS_FILE = "metrics.prom"


def _missing(message: str) -> ValidationException:
    return ValidationException(ValidationExceptionCode.MissingInput, message)


class PipelineEndpoint:
    def __init__(self, init_data: InitData) -> None:
        self.init_data = init_data
        self.config = init_data.config
        self.out = init_data.out
        self.command_names: list[str] = []
        self.command_functions: list[CommandFunction] = []
        self.add_commands_by_prefix("cmd_")

    def add_command(self, name: str, function: CommandFunction) -> None:
        if name in self.command_names:
            raise ValueError("Command name is not unique")
        self.command_names.append(name)
        self.command_functions.append(function)

    def add_commands_by_prefix(self, prefix: str) -> None:
        for name, method in inspect.getmembers(
                self, predicate=inspect.ismethod):
            if name.startswith(prefix):
                self.add_command(name[len(prefix):], method)

    async def run_subcommand(self, name: str) -> None:
        if name not in self.command_names:
            raise ValidationException(
                ValidationExceptionCode.UnknownSubcommand,
                f"Unknown subcommand {name}",
            )
        write_run_artifacts(self.init_data)
        command = self.command_functions[self.command_names.index(name)]
        await command()
        if self.init_data.is_metrics:
            write_metrics(self.out / METRICS_FILE)

    def _subdir(self, name: str) -> Path:
        path = self.out / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _input_files(self, suffix: str) -> list[Path]:
        if not self.init_data.inputs:
            raise _missing("No --input given")
        files: list[Path] = []
        for path in self.init_data.inputs:
            if path.is_dir():
                files.extend(sorted(path.glob(f"*{suffix}")))
            elif path.is_file():
                files.append(path)
            else:
                raise _missing(f"Input {path} does not exist")
        if not files:
            raise _missing(f"No {suffix} files among the inputs")
        return files

    def _load_sessions(self) -> list[TelemetrySession]:
        return [
            convert_units(load_csv_session(path))
            for path in self._input_files(".csv")
        ]

    def _window_file(self) -> Path:
        files = self._input_files(".bin")
        if len(files) != 1:
            raise _missing(f"Expected one window container, got {len(files)}")
        return files[0]

    def _load_windows(self) -> tuple[WindowSet, DataSplit]:
        """The window container plus the split manifest beside it, if any."""
        path = self._window_file()
        windows = load_window_set(path)
        manifest = path.parent / SPLIT_FILE
        if manifest.is_file():
            split = DataSplit.load(manifest)
            require_valid_split(split, windows)
        else:
            split = split_windows(
                windows, self.config.window,
                derive_seeds(self.config.seed).split)
        return windows, split

    def _require_checkpoint(self) -> Path:
        checkpoint = self.init_data.checkpoint
        if checkpoint is None or not checkpoint.is_file():
            raise _missing(f"No checkpoint at {checkpoint}")
        return checkpoint

    async def cmd_simulate(self) -> None:
        sessions_dir = self._subdir("sessions")
        truth_dir = self._subdir("ground_truth")
        fleet = simulate_fleet(self.config.simulate, self.config.seed)
        for session, ground_truth in fleet:
            save_csv_session(
                session, sessions_dir / f"{session.session_id}.csv")
            save_ground_truth(
                ground_truth, truth_dir / f"{session.session_id}.csv")

    async def cmd_label(self) -> None:
        labels_dir = self._subdir("labels")
        truth_dir = self.init_data.ground_truth
        comparisons: dict[str, EventComparison] = {}
        for session in self._load_sessions():
            labels = label_session(session, self.config.labeller)
            save_labels(
                session.t, labels, labels_dir / f"{session.session_id}.csv")
            if truth_dir is None:
                continue
            truth_file = truth_dir / f"{session.session_id}.csv"
            if not truth_file.is_file():
                raise _missing(
                    f"No ground truth for session {session.session_id}"
                    f" at {truth_file}")
            comparisons[session.session_id] = compare_events(
                labels, load_ground_truth(truth_file), session.dt,
                t0=float(session.t[0]))
        if not comparisons:
            return
        overall = merge_comparisons(list(comparisons.values()))
        document = {
            "overall": overall.to_json(),
            "sessions": {
                session_id: comparison.to_json()
                for session_id, comparison in comparisons.items()
            },
        }
        (self.out / "event_comparison.json").write_text(
            json.dumps(document, indent=2))
        logging.info(
            f"Event recall {overall.overall.recall}, precision"
            f" {overall.overall.precision} over {len(comparisons)} sessions")

    async def cmd_featurize(self) -> None:
        features_dir = self._subdir("features")
        frames = [
            engineer_features(session).tagged(SplitTag.train)
            for session in self._load_sessions()
        ]
        for frame in frames:
            save_feature_csv(frame, features_dir / f"{frame.session_id}.csv")
        fit_normalizer(frames).save(self.out / "norm_stats.json")

    async def cmd_windows(self) -> None:
        labelled = label_sessions(self._load_sessions(), self.config.labeller)
        windows = window_sessions(labelled, self.config.window)
        seeds = derive_seeds(self.config.seed)
        split = split_windows(windows, self.config.window, seeds.split)
        save_window_set(windows, self.out / WINDOWS_FILE)
        split.save(self.out / SPLIT_FILE)

        drivers = sorted(set(windows.driver_ids))
        if (
            split.protocol == SplitProtocol.driver
            and len(drivers) >= MIN_GROUPS
        ):
            folds_dir = self._subdir("folds")
            folds = leave_one_driver_out(
                windows, seeds.split, self.config.window.validation_ratio)
            for driver, fold in zip(drivers, folds):
                require_valid_split(fold, windows)
                fold.save(folds_dir / f"{driver}.json")

    async def cmd_train(self) -> None:
        cfg = self.config
        windows, split = self._load_windows()
        seeds = derive_seeds(cfg.seed)
        data = prepare_data(windows, split, cfg.smote, seeds)
        model, history = fit_model(
            data, cfg.model, cfg.loss.gamma, cfg.optimizer, cfg.schedule,
            seeds)

        class_scales = UNIT_SCALES
        if cfg.evaluation.calibrate:
            class_scales = calibrate_class_scales(
                predict_proba(model, data.validation.features),
                data.validation.labels,
                cfg.evaluation.calibration_grid,
                cfg.evaluation.beta,
            )
        save_checkpoint(
            model,
            self.out / CHECKPOINT_FILE,
            extra={
                "norm_stats": data.stats.to_document(),
                "class_weights": data.weights.to_json(),
                "class_scales": list(class_scales),
                "split": data.split.to_json(),
                "best_epoch": history.best_epoch,
            },
        )
        emit_plot_data(history, self.out / "history.csv")
        data.stats.save(self.out / "norm_stats.json")
        save_window_set(data.train, self.out / "train_windows.bin")

    async def cmd_evaluate(self) -> None:
        path = self._window_file()
        model, extra = load_checkpoint(self._require_checkpoint())
        windows = load_window_set(path)
        try:
            split = DataSplit.from_json(extra["split"])
            stats = NormStats.from_document(extra["norm_stats"])
        except KeyError as err:
            raise _missing(f"Checkpoint lacks {err}")
        require_valid_split(split, windows)
        test = pad_windows(
            normalize_windows(
                windows.subset(split.test, SplitTag.test), stats),
            model.config.input_rows,
        )
        report, matrix, probs = evaluate(
            model,
            test,
            beta=self.config.evaluation.beta,
            class_scales=tuple(extra.get("class_scales", UNIT_SCALES)),
        )
        report.save(self.out / "report.json")
        matrix.save(self.out / "confusion.csv")
        save_probabilities(probs, test.labels, self.out / "probabilities.csv")

    async def cmd_sweep(self) -> None:
        cfg = self.config
        labelled = label_sessions(self._load_sessions(), cfg.labeller)
        settings = ExperimentSettings(
            window=cfg.window,
            smote=cfg.smote,
            model=cfg.model,
            gamma=cfg.loss.gamma,
            optimizer=cfg.optimizer,
            schedule=cfg.schedule,
            beta=cfg.evaluation.beta,
            base_seed=cfg.seed,
        ).with_epoch_budget(cfg.evaluation.sweep_epochs)
        seeds = cfg.evaluation.sweep_seeds
        workers = cfg.evaluation.sweep_workers
        if self.init_data.grid == SweepGrid.gamma:
            gamma_points = await sweep_gamma_async(
                labelled, settings, cfg.evaluation.gamma_grid, seeds, workers)
            emit_plot_data(gamma_points, self.out / "sweep_gamma.csv")
        else:
            points = await sweep_window_horizon_async(
                labelled, settings, cfg.evaluation.sweep_windows,
                cfg.evaluation.sweep_horizons, seeds, workers)
            emit_plot_data(points, self.out / "sweep_window_horizon.csv")

    async def cmd_bench(self) -> None:
        seeds = derive_seeds(self.config.seed)
        if self.init_data.checkpoint is not None:
            model, _ = load_checkpoint(self._require_checkpoint())
        else:
            model = build_model(self.config.model, seeds.init)
        stats = latency_benchmark(
            model,
            self.config.evaluation.bench_windows,
            self.config.evaluation.bench_warmup,
            seeds.bench,
        )
        stats.save(self.out / "latency.json")
