"""
Event-level comparison of a label timeline against recorded events, plus
the per-sample label CSV.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy import ndimage

from drivesense.event_class import AGGRESSIVE_PRIORITY, EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.telemetry.synthetic import GroundTruthEvents
from drivesense.typing import FloatArray, IntArray

DEFAULT_IOU_THRESHOLD = 0.3


@dataclass(frozen=True)
class Episode:
    event_class: EventClass
    start: float
    end: float


@dataclass(frozen=True)
class EventMatch:
    event_class: str
    truth_start: float
    truth_end: float
    label_start: float
    label_end: float
    iou: float


@dataclass(frozen=True)
class ClassComparison:
    ground_truth: int
    detected: int
    matched: int
    recall: float | None
    precision: float | None


@dataclass(frozen=True)
class EventComparison:
    iou_threshold: float
    per_class: dict[str, ClassComparison]
    overall: ClassComparison
    matches: list[EventMatch] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def label_episodes(
    labels: IntArray, dt: float, t0: float = 0.0
) -> list[Episode]:
    """Maximal runs of each aggressive class, as ``[start, end)`` seconds."""
    episodes = []
    labels = np.asarray(labels)
    for event_class in AGGRESSIVE_PRIORITY:
        runs, _ = ndimage.label(labels == int(event_class))
        for run_slice in ndimage.find_objects(runs):
            if run_slice is None:
                continue
            run = run_slice[0]
            episodes.append(
                Episode(event_class, t0 + run.start * dt, t0 + run.stop * dt))
    return sorted(episodes, key=lambda e: (e.start, e.event_class))


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    intersection = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    if union <= 0:
        return 0.0
    return intersection / union


def _ratio(numerator: int, denominator: int) -> float | None:
    return numerator / denominator if denominator > 0 else None


def compare_events(
    labels: IntArray,
    ground_truth: GroundTruthEvents,
    dt: float,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    t0: float = 0.0,
) -> EventComparison:
    """
    One-to-one matching per class, greedy on IoU. Recall and precision are
    ``None`` when their denominator is zero.
    """
    if dt <= 0:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"dt must be positive : {dt}",
        )
    episodes = label_episodes(labels, dt, t0)
    per_class = {}
    matches: list[EventMatch] = []
    totals = np.zeros(3, dtype=np.int64)

    for event_class in sorted(AGGRESSIVE_PRIORITY):
        truths = ground_truth.of_class(event_class)
        found = [e for e in episodes if e.event_class == event_class]
        pairs = sorted(
            (
                (interval_iou((t.start, t.end), (e.start, e.end)), i, j)
                for i, t in enumerate(truths)
                for j, e in enumerate(found)
            ),
            key=lambda pair: (-pair[0], pair[1], pair[2]),
        )
        used_truth: set[int] = set()
        used_found: set[int] = set()
        for iou, i, j in pairs:
            if iou < iou_threshold:
                break
            if i in used_truth or j in used_found:
                continue
            used_truth.add(i)
            used_found.add(j)
            matches.append(EventMatch(
                event_class.slug,
                truths[i].start, truths[i].end,
                found[j].start, found[j].end,
                iou,
            ))
        matched = len(used_truth)
        per_class[event_class.slug] = ClassComparison(
            ground_truth=len(truths),
            detected=len(found),
            matched=matched,
            recall=_ratio(matched, len(truths)),
            precision=_ratio(matched, len(found)),
        )
        totals += (len(truths), len(found), matched)

    overall = ClassComparison(
        ground_truth=int(totals[0]),
        detected=int(totals[1]),
        matched=int(totals[2]),
        recall=_ratio(int(totals[2]), int(totals[0])),
        precision=_ratio(int(totals[2]), int(totals[1])),
    )
    return EventComparison(iou_threshold, per_class, overall, matches)


def save_labels(t: FloatArray, labels: IntArray, path: str | Path) -> None:
    frame = pd.DataFrame({
        "time_s": t,
        "label": [EventClass(int(label)).slug for label in labels],
    })
    frame.to_csv(path, index=False)


def load_labels(path: str | Path) -> tuple[FloatArray, IntArray]:
    frame = pd.read_csv(path, skipinitialspace=True)
    for column in ("time_s", "label"):
        if column not in frame.columns:
            raise ValidationException(
                ValidationExceptionCode.MissingColumn,
                f"{path}: missing required column '{column}'",
            )
    try:
        labels = np.array(
            [int(EventClass.from_slug(str(slug))) for slug in frame["label"]],
            dtype=np.int64,
        )
    except ValueError as err:
        raise ValidationException(
            ValidationExceptionCode.UnparsableValue, f"{path}: {err}")
    return frame["time_s"].to_numpy(dtype=np.float64), labels


def _pooled(parts: list[ClassComparison]) -> ClassComparison:
    truths = sum(p.ground_truth for p in parts)
    detected = sum(p.detected for p in parts)
    matched = sum(p.matched for p in parts)
    return ClassComparison(
        truths, detected, matched,
        _ratio(matched, truths), _ratio(matched, detected),
    )


def merge_comparisons(comparisons: list[EventComparison]) -> EventComparison:
    """Pools event counts of several sessions compared at one threshold."""
    if len(comparisons) == 0:
        raise ValidationException(
            ValidationExceptionCode.MissingInput, "No comparisons to merge")
    slugs = [c.slug for c in sorted(AGGRESSIVE_PRIORITY)]
    return EventComparison(
        comparisons[0].iou_threshold,
        {
            slug: _pooled([c.per_class[slug] for c in comparisons])
            for slug in slugs
        },
        _pooled([c.overall for c in comparisons]),
        [match for c in comparisons for match in c.matches],
    )
