import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from drivesense.event_class import AGGRESSIVE_PRIORITY, NUM_CLASSES, EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.normalizer import NormStats
from drivesense.network.model import ModelParameters, predict_proba
from drivesense.typing import FloatArray, IntArray
from drivesense.windowing.window_set import WindowSet

from .scores import (AucScores, ConfusionMatrix, FScores, confusion_matrix,
                     fbeta, roc_auc_ovr)

UNIT_SCALES = (1.0,) * NUM_CLASSES
PROBABILITY_COLUMNS = ["window_id", "label"] + [
    f"p{c}" for c in range(NUM_CLASSES)]


def decide(
    probs: FloatArray, class_scales: Sequence[float] = UNIT_SCALES
) -> IntArray:
    """``argmax_c p_c * s_c``; unit scales give the plain argmax."""
    probs = np.asarray(probs, dtype=np.float64)
    return np.argmax(probs * np.asarray(class_scales), axis=1)


def calibrate_class_scales(
    probs: FloatArray,
    labels: IntArray,
    grid: Sequence[float],
    beta: float = 2.0,
    rounds: int = 2,
) -> tuple[float, ...]:
    """
    Coordinate ascent on macro F-beta over the aggressive classes' decision
    scales. Normal keeps scale 1; a scale only moves on strict improvement.
    """
    _check_lengths(probs, labels)
    scales = list(UNIT_SCALES)

    def score(candidate: list[float]) -> float:
        matrix = confusion_matrix(decide(probs, candidate), labels)
        return fbeta(matrix, beta).macro_fbeta

    best = score(scales)
    for _ in range(rounds):
        improved = False
        for event_class in AGGRESSIVE_PRIORITY:
            for value in grid:
                candidate = list(scales)
                candidate[event_class] = float(value)
                result = score(candidate)
                if result > best:
                    best = result
                    scales = candidate
                    improved = True
        if not improved:
            break
    logging.info(
        f"Calibrated class scales {scales} (macro F{beta:g} {best:.4f})")
    return tuple(scales)


def _check_lengths(probs: FloatArray, labels: IntArray) -> None:
    if len(probs) != len(labels):
        raise ValidationException(
            ValidationExceptionCode.LengthMismatch,
            f"{len(probs)} probability rows for {len(labels)} labels",
        )


def _finite_or_none(value: float) -> float | None:
    return None if math.isnan(value) else float(value)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    scores: FScores
    auc: AucScores
    class_scales: tuple[float, ...] = UNIT_SCALES

    @property
    def accuracy(self) -> float:
        return self.scores.accuracy

    @property
    def macro_f2(self) -> float:
        return self.scores.macro_fbeta

    @property
    def weighted_f2(self) -> float:
        return self.scores.weighted_fbeta

    @property
    def macro_auc(self) -> float:
        return self.auc.macro

    def to_json(self) -> dict[str, Any]:
        s = self.scores
        per_class = {
            c.slug: {
                "support": int(s.support[c]),
                "precision": float(s.precision[c]),
                "recall": float(s.recall[c]),
                "f1": float(s.f1[c]),
                "fbeta": float(s.fbeta[c]),
                "fbeta_undefined": bool(s.undefined[c]),
                "roc_auc": _finite_or_none(self.auc.per_class[c]),
                "roc_auc_undefined": not bool(self.auc.defined[c]),
            }
            for c in EventClass
        }
        return {
            "windows": int(s.support.sum()),
            "beta": s.beta,
            "accuracy": s.accuracy,
            "macro_f1": s.macro_f1,
            "macro_fbeta": s.macro_fbeta,
            "weighted_fbeta": s.weighted_fbeta,
            "macro_roc_auc": _finite_or_none(self.auc.macro),
            "class_scales": list(self.class_scales),
            "classes": per_class,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def build_report(
    probs: FloatArray,
    labels: IntArray,
    beta: float = 2.0,
    class_scales: Sequence[float] = UNIT_SCALES,
) -> tuple[MetricsReport, ConfusionMatrix]:
    """Scores a probability matrix; a pure function of its inputs."""
    _check_lengths(probs, labels)
    matrix = confusion_matrix(decide(probs, class_scales), labels)
    report = MetricsReport(
        fbeta(matrix, beta), roc_auc_ovr(probs, labels), tuple(class_scales))
    return report, matrix


def evaluate(
    model: ModelParameters,
    windows: WindowSet,
    norm_stats: NormStats | None = None,
    beta: float = 2.0,
    class_scales: Sequence[float] = UNIT_SCALES,
) -> tuple[MetricsReport, ConfusionMatrix, FloatArray]:
    """
    Eval-mode predictions on ``windows`` scored against their labels.
    Raw windows are normalised with ``norm_stats`` first.
    """
    if len(windows) == 0:
        raise ValidationException(
            ValidationExceptionCode.EmptyTestSet, "No windows to evaluate")
    features = windows.features
    if not windows.normalized:
        if norm_stats is None:
            raise ValidationException(
                ValidationExceptionCode.MissingInput,
                "Raw windows need the training normalisation stats",
            )
        features = norm_stats.normalize(features)
    probs = predict_proba(model, features)
    report, matrix = build_report(probs, windows.labels, beta, class_scales)
    logging.info(
        f"Evaluated {len(windows)} windows: accuracy={report.accuracy:.4f}"
        f" macro_f2={report.macro_f2:.4f}"
        f" weighted_f2={report.weighted_f2:.4f}"
        f" macro_auc={report.macro_auc:.4f}"
    )
    return report, matrix, probs


def save_probabilities(
    probs: FloatArray, labels: IntArray, path: str | Path
) -> None:
    _check_lengths(probs, labels)
    frame = pd.DataFrame(probs, columns=PROBABILITY_COLUMNS[2:])
    frame.insert(0, "label", np.asarray(labels, dtype=np.int64))
    frame.insert(0, "window_id", np.arange(len(labels)))
    frame.to_csv(path, index=False, float_format="%.17g")


def load_probabilities(path: str | Path) -> tuple[FloatArray, IntArray]:
    frame = pd.read_csv(path)
    missing = [c for c in PROBABILITY_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationException(
            ValidationExceptionCode.MissingColumn,
            f"{path}: missing columns {missing}",
        )
    return (
        frame[PROBABILITY_COLUMNS[2:]].to_numpy(dtype=np.float64),
        frame["label"].to_numpy(dtype=np.int64),
    )
