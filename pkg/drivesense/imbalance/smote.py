"""
SMOTE oversampling of minority windows.

Windows are flattened to ``rows * channels`` vectors, new samples are drawn
on the segment between a random class member and one of its k nearest
same-class neighbours, then reshaped back. Originals are kept verbatim and
the majority class is never touched.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.neighbors import NearestNeighbors

from drivesense.event_class import NUM_CLASSES, EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.frame import SplitTag
from drivesense.imbalance.class_weights import DEFAULT_BOOST
from drivesense.typing import FloatArray, IntArray
from drivesense.windowing.window_set import SyntheticOrigin, WindowSet


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_fraction: float = 0.5
    seed: int = 0
    boost: tuple[float, ...] = DEFAULT_BOOST

    def __post_init__(self) -> None:
        problems = []
        if self.k_neighbors < 1:
            problems.append("k_neighbors must be >= 1")
        if not 0 < self.target_fraction <= 1:
            problems.append("target_fraction must lie in (0, 1]")
        if len(self.boost) != NUM_CLASSES or min(self.boost) <= 0:
            problems.append(f"boost needs {NUM_CLASSES} positive factors")
        if problems:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "smote: " + "; ".join(problems),
            )


def synthesize_samples(
    vectors: FloatArray,
    anchors: IntArray,
    neighbours: IntArray,
    lambdas: FloatArray,
) -> FloatArray:
    """``vectors[a] + lam * (vectors[nn] - vectors[a])`` row by row."""
    base = vectors[anchors]
    return base + lambdas[:, None] * (vectors[neighbours] - base)


def smote_oversample(train: WindowSet, cfg: SmoteConfig) -> WindowSet:
    if train.split_tag != SplitTag.train:
        raise ValidationException(
            ValidationExceptionCode.NotTrainingSplit,
            f"SMOTE only runs on the training split, got"
            f" {train.split_tag.value}",
        )
    counts = train.class_counts()
    majority = int(np.argmax(counts))
    target = math.ceil(cfg.target_fraction * counts[majority])
    flat = train.features.reshape(len(train), -1)

    new_vectors = []
    new_labels = []
    origins = []
    next_index = len(train)
    for event_class in EventClass:
        n = int(counts[event_class])
        needed = target - n
        if event_class == majority or needed <= 0:
            continue
        if n == 0:
            logging.warning(
                f"No {event_class.slug} windows in the training split,"
                f" nothing to oversample from")
            continue
        if n < 2:
            raise ValidationException(
                ValidationExceptionCode.DegenerateClass,
                f"Class {event_class.slug} has a single training window",
            )
        members = np.flatnonzero(train.labels == event_class)
        k = min(cfg.k_neighbors, n - 1)
        neighbour_search = NearestNeighbors(n_neighbors=k + 1).fit(
            flat[members])
        _, nearest = neighbour_search.kneighbors(flat[members])
        rng = np.random.default_rng([cfg.seed, int(event_class)])

        picks = rng.integers(0, n, size=needed)
        neighbour_slots = rng.integers(1, k + 1, size=needed)
        lambdas = rng.uniform(0.0, 1.0, size=needed)
        # column 0 is the point itself unless duplicates tie with it
        local_neighbours = nearest[picks, neighbour_slots]
        same = local_neighbours == picks
        local_neighbours[same] = nearest[picks[same], 0]

        anchors = members[picks]
        neighbours = members[local_neighbours]
        new_vectors.append(
            synthesize_samples(flat, anchors, neighbours, lambdas))
        new_labels.append(np.full(needed, int(event_class), dtype=np.int64))
        for anchor, neighbour, lam in zip(anchors, neighbours, lambdas):
            origins.append(SyntheticOrigin(
                next_index, int(anchor), int(neighbour), float(lam)))
            next_index += 1
        logging.debug(
            f"SMOTE: {event_class.slug} {n} -> {target} windows (k={k})")

    if not new_vectors:
        return train
    synthetic = np.concatenate(new_vectors).reshape(
        -1, train.rows, train.num_channels)
    labels = np.concatenate(new_labels)
    origin_sessions = tuple(train.session_ids[o.anchor] for o in origins)
    origin_drivers = tuple(train.driver_ids[o.anchor] for o in origins)
    origin_starts = np.array([train.start_t[o.anchor] for o in origins])
    return replace(
        train,
        features=np.concatenate((train.features, synthetic)),
        labels=np.concatenate((train.labels, labels)),
        session_ids=train.session_ids + origin_sessions,
        driver_ids=train.driver_ids + origin_drivers,
        start_t=np.concatenate((train.start_t, origin_starts)),
        provenance=train.provenance + tuple(origins),
    )
