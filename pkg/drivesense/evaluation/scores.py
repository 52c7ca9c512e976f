"""
Pure classification scores: confusion matrix, F-beta family and
one-vs-rest ROC-AUC. Every ratio with a zero denominator is reported as 0
and flagged.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from drivesense.event_class import NUM_CLASSES, EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import BoolArray, FloatArray, IntArray


def _check_lengths(first: int, second: int, what: str) -> None:
    if first != second:
        raise ValidationException(
            ValidationExceptionCode.LengthMismatch,
            f"{first} {what} for {second} labels",
        )


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: IntArray  # rows are true classes, columns predictions

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> IntArray:
        return self.counts.sum(axis=1)

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_frame(self) -> pd.DataFrame:
        slugs = [c.slug for c in EventClass]
        frame = pd.DataFrame(self.counts, index=slugs, columns=slugs)
        frame.index.name = "true"
        return frame

    def save(self, path: str | Path) -> None:
        self.to_frame().to_csv(path)


def confusion_matrix(
    predictions: IntArray, labels: IntArray, classes: int = NUM_CLASSES
) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_lengths(len(predictions), len(labels), "predictions")
    for name, values in (("prediction", predictions), ("label", labels)):
        if len(values) and (values.min() < 0 or values.max() >= classes):
            raise ValidationException(
                ValidationExceptionCode.LabelOutOfRange,
                f"Every {name} must lie in [0, {classes})",
            )
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def _safe_divide(numerator: FloatArray, denominator: FloatArray) -> FloatArray:
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    out = np.zeros_like(numerator)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def f_score(
    precision: FloatArray, recall: FloatArray, beta: float
) -> FloatArray:
    beta2 = beta * beta
    return _safe_divide(
        (1.0 + beta2) * precision * recall, beta2 * precision + recall)


@dataclass(frozen=True, eq=False)
class FScores:
    beta: float
    precision: FloatArray
    recall: FloatArray
    f1: FloatArray
    fbeta: FloatArray
    support: IntArray
    undefined: BoolArray
    accuracy: float

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    @property
    def macro_fbeta(self) -> float:
        return float(self.fbeta.mean())

    @property
    def weighted_fbeta(self) -> float:
        total = self.support.sum()
        if total == 0:
            return 0.0
        return float(np.dot(self.support, self.fbeta) / total)


def fbeta(matrix: ConfusionMatrix, beta: float = 2.0) -> FScores:
    if not beta > 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"beta must be > 0, got {beta}",
        )
    counts = matrix.counts
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    precision = _safe_divide(tp, predicted)
    recall = _safe_divide(tp, actual)
    return FScores(
        beta=beta,
        precision=precision,
        recall=recall,
        f1=f_score(precision, recall, 1.0),
        fbeta=f_score(precision, recall, beta),
        support=actual,
        undefined=(predicted == 0) | (actual == 0),
        accuracy=matrix.accuracy,
    )


@dataclass(frozen=True, eq=False)
class AucScores:
    per_class: FloatArray  # nan where the one-vs-rest problem is undefined
    defined: BoolArray

    @property
    def macro(self) -> float:
        if not self.defined.any():
            return float("nan")
        return float(self.per_class[self.defined].mean())


def binary_auc(scores: FloatArray, positives: BoolArray) -> float:
    """Mann-Whitney statistic with midranks for tied scores."""
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores, method="average")
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc_ovr(probs: FloatArray, labels: IntArray) -> AucScores:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_lengths(len(probs), len(labels), "probability rows")
    per_class = np.array([
        binary_auc(probs[:, c], labels == c) for c in range(probs.shape[1])
    ])
    return AucScores(per_class, ~np.isnan(per_class))
