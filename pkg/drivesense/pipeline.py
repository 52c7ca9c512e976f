"""
End-to-end composition of the stages: labelling, windowing, splitting,
normalisation, oversampling and training. Every random stream is derived
from one master seed.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.frame import FeatureFrame, SplitTag, engineer_features
from drivesense.features.normalizer import NormStats, fit_normalizer
from drivesense.imbalance.class_weights import (ClassWeights,
                                                compute_class_weights)
from drivesense.imbalance.smote import SmoteConfig, smote_oversample
from drivesense.labelling.config import LabellerConfig
from drivesense.labelling.labeller import label_session
from drivesense.network.config import NetworkConfig
from drivesense.network.model import ModelParameters, build_model
from drivesense.telemetry.session import TelemetrySession
from drivesense.training.config import (LossSettings, OptimizerConfig,
                                        ScheduleConfig)
from drivesense.training.trainer import HISTORY_COLUMNS, TrainHistory, train
from drivesense.typing import IntArray
from drivesense.windowing.config import WindowConfig
from drivesense.windowing.splits import (DataSplit, SplitProtocol,
                                         require_valid_split, split_grouped,
                                         split_stratified)
from drivesense.windowing.window_set import WindowSet, segment

ROW_MULTIPLE = 4
WINDOW_HORIZON_COLUMNS = ["W", "H", "seed", "macro_f2"]
GAMMA_COLUMNS = [
    "gamma", "seed", "macro_f2", "weighted_f2", "accuracy", "macro_auc"]
PLOT_LAYOUTS = (HISTORY_COLUMNS, WINDOW_HORIZON_COLUMNS, GAMMA_COLUMNS)


@dataclass(frozen=True)
class RunSeeds:
    split: int
    smote: int
    init: int
    shuffle: int
    bench: int


def derive_seeds(seed: int, *streams: int) -> RunSeeds:
    """Independent seeds for each random stage, optionally per sub-stream."""
    state = np.random.SeedSequence([seed, *streams]).generate_state(
        5, dtype=np.uint32)
    return RunSeeds(*(int(s) for s in state))


@dataclass(frozen=True, eq=False)
class LabelledSession:
    frame: FeatureFrame
    labels: IntArray


def label_sessions(
    sessions: Sequence[TelemetrySession], cfg: LabellerConfig
) -> list[LabelledSession]:
    return [
        LabelledSession(
            engineer_features(session), label_session(session, cfg))
        for session in sessions
    ]


def window_sessions(
    labelled: Sequence[LabelledSession], cfg: WindowConfig
) -> WindowSet:
    windows = WindowSet.concat([
        segment(item.frame, item.labels, cfg) for item in labelled])
    logging.info(
        f"Cut {len(windows)} windows of {windows.rows} rows, class counts"
        f" {windows.class_counts().tolist()}"
    )
    return windows


def padded_rows(rows: int) -> int:
    return ROW_MULTIPLE * math.ceil(rows / ROW_MULTIPLE)


def pad_windows(windows: WindowSet, rows: int) -> WindowSet:
    """Zero rows are prepended; on normalised windows zero is the mean."""
    missing = rows - windows.rows
    if missing == 0:
        return windows
    if missing < 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"Cannot pad {windows.rows}-row windows down to {rows} rows",
        )
    features = np.pad(windows.features, ((0, 0), (missing, 0), (0, 0)))
    return replace(windows, features=features)


def normalize_windows(windows: WindowSet, stats: NormStats) -> WindowSet:
    if windows.channels != stats.channels:
        raise ValidationException(
            ValidationExceptionCode.ChannelMismatch,
            f"Window channels {windows.channels} do not match"
            f" normalisation channels {stats.channels}",
        )
    return replace(
        windows, features=stats.normalize(windows.features), normalized=True)


def split_windows(
    windows: WindowSet, cfg: WindowConfig, seed: int
) -> DataSplit:
    protocol = SplitProtocol(cfg.split_protocol)
    if protocol == SplitProtocol.stratified:
        split = split_stratified(windows, cfg.ratios, seed)
    else:
        split = split_grouped(
            windows, protocol, cfg.ratios, seed, cfg.validation_ratio)
    require_valid_split(split, windows)
    return split


@dataclass(frozen=True, eq=False)
class PreparedData:
    """Network-ready splits: normalised, padded, oversampled train."""

    split: DataSplit
    train: WindowSet
    validation: WindowSet
    test: WindowSet
    stats: NormStats
    weights: ClassWeights


def prepare_data(
    windows: WindowSet,
    split: DataSplit,
    smote_cfg: SmoteConfig,
    seeds: RunSeeds,
) -> PreparedData:
    train_raw = windows.subset(split.train, SplitTag.train)
    stats = fit_normalizer(train_raw.as_frames())
    train_set = smote_oversample(
        normalize_windows(train_raw, stats),
        replace(smote_cfg, seed=seeds.smote),
    )
    weights = compute_class_weights(train_set.class_counts(), smote_cfg.boost)
    rows = padded_rows(windows.rows)
    validation = windows.subset(split.validation, SplitTag.validation)
    test = windows.subset(split.test, SplitTag.test)
    logging.info(
        f"Training on {len(train_set)} windows"
        f" ({len(train_set.provenance)} synthetic), class weights"
        f" {weights.to_json()}"
    )
    return PreparedData(
        split=split,
        train=pad_windows(train_set, rows),
        validation=pad_windows(normalize_windows(validation, stats), rows),
        test=pad_windows(normalize_windows(test, stats), rows),
        stats=stats,
        weights=weights,
    )


def fit_model(
    data: PreparedData,
    model_cfg: NetworkConfig,
    gamma: tuple[float, ...],
    optimizer: OptimizerConfig,
    schedule: ScheduleConfig,
    seeds: RunSeeds,
) -> tuple[ModelParameters, TrainHistory]:
    """Builds the network for the prepared window shape and trains it."""
    model_cfg = replace(
        model_cfg,
        input_rows=data.train.rows,
        input_channels=data.train.num_channels,
    )
    model = build_model(model_cfg, seeds.init)
    loss = LossSettings(alpha=tuple(data.weights.weights), gamma=gamma)
    return train(
        model,
        data.train,
        data.validation,
        loss,
        replace(optimizer, shuffle_seed=seeds.shuffle),
        schedule,
    )


def emit_plot_data(
    source: TrainHistory | Sequence[Any] | str | Path,
    path: str | Path,
) -> pd.DataFrame:
    """
    Writes a tidy CSV for plotting from a training history, a sequence of
    sweep points or an existing history/sweep CSV.
    """
    if isinstance(source, TrainHistory):
        frame = source.to_frame()
    elif isinstance(source, (str, Path)):
        if not Path(source).is_file():
            raise ValidationException(
                ValidationExceptionCode.MissingInput,
                f"No plot source at {source}",
            )
        frame = pd.read_csv(source)
    elif len(source) == 0:
        raise ValidationException(
            ValidationExceptionCode.MissingInput, "No points to plot")
    else:
        frame = pd.DataFrame([dataclasses.asdict(p) for p in source])
    for columns in PLOT_LAYOUTS:
        if set(columns) <= set(frame.columns):
            frame = frame[columns]
            break
    else:
        raise ValidationException(
            ValidationExceptionCode.MissingColumn,
            f"Plot source columns {list(frame.columns)} match no known"
            f" layout",
        )
    frame.to_csv(path, index=False)
    return frame
