import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from drivesense.event_class import EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import IntArray

from .window_set import WindowSet

MIN_WINDOWS_PER_CLASS = 3
MIN_GROUPS = 3


class SplitProtocol(Enum):
    stratified = "stratified"
    session = "session"
    driver = "driver"


@dataclass(frozen=True, eq=False)
class DataSplit:
    train: IntArray
    validation: IntArray
    test: IntArray
    protocol: SplitProtocol

    def to_json(self) -> dict[str, object]:
        return {
            "protocol": self.protocol.value,
            "train": self.train.tolist(),
            "validation": self.validation.tolist(),
            "test": self.test.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "DataSplit":
        return cls.from_json(json.loads(Path(path).read_text()))

    @classmethod
    def from_json(cls, document: dict[str, Any]) -> "DataSplit":
        return cls(
            train=np.array(document["train"], dtype=np.int64),
            validation=np.array(document["validation"], dtype=np.int64),
            test=np.array(document["test"], dtype=np.int64),
            protocol=SplitProtocol(document["protocol"]),
        )


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationException(
            ValidationExceptionCode.InvalidSplit,
            f"Split ratios must be three non-negative values summing to 1 :"
            f" {tuple(ratios)}",
        )
    return (float(ratios[0]), float(ratios[1]), float(ratios[2]))


def _as_split(
    parts: tuple[list[int], list[int], list[int]], protocol: SplitProtocol
) -> DataSplit:
    train, validation, test = (
        np.array(sorted(part), dtype=np.int64) for part in parts)
    return DataSplit(train, validation, test, protocol)


def split_stratified(
    windows: WindowSet, ratios: Sequence[float], seed: int
) -> DataSplit:
    """Per-class seeded shuffle, cut at rounded ratio boundaries."""
    train_ratio, validation_ratio, _ = _check_ratios(ratios)
    counts = windows.class_counts()
    for event_class in EventClass:
        if 0 < counts[event_class] < MIN_WINDOWS_PER_CLASS:
            raise ValidationException(
                ValidationExceptionCode.ClassTooSmall,
                f"Class {event_class.slug} has {counts[event_class]} windows,"
                f" at least {MIN_WINDOWS_PER_CLASS} are needed",
            )
    rng = np.random.default_rng(seed)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for event_class in EventClass:
        members = rng.permutation(
            np.flatnonzero(windows.labels == event_class))
        n = len(members)
        n_train = int(round(train_ratio * n))
        n_validation = min(int(round(validation_ratio * n)), n - n_train)
        parts[0].extend(members[:n_train].tolist())
        parts[1].extend(members[n_train:n_train + n_validation].tolist())
        parts[2].extend(members[n_train + n_validation:].tolist())
    split = _as_split(parts, SplitProtocol.stratified)
    logging.debug(
        f"Stratified split: {len(split.train)}/{len(split.validation)}/"
        f"{len(split.test)}"
    )
    return split


def _group_ids(windows: WindowSet, group_by: SplitProtocol) -> tuple[str, ...]:
    if group_by == SplitProtocol.session:
        return windows.session_ids
    if group_by == SplitProtocol.driver:
        return windows.driver_ids
    raise ValidationException(
        ValidationExceptionCode.InvalidSplit,
        f"Cannot group windows by {group_by.value}",
    )


def split_grouped(
    windows: WindowSet,
    group_by: SplitProtocol,
    held_out: Sequence[str] | Sequence[float],
    seed: int,
    validation_ratio: float = 0.15,
) -> DataSplit:
    """
    Assign whole sessions or drivers to one side. ``held_out`` is either the
    list of group ids forming the test set (remaining groups are shared
    between train and validation using ``validation_ratio``) or a
    ``(train, validation, test)`` ratio triple over groups.
    """
    ids = _group_ids(windows, group_by)
    groups = sorted(set(ids))
    if len(groups) < MIN_GROUPS:
        raise ValidationException(
            ValidationExceptionCode.TooFewGroups,
            f"Grouped split by {group_by.value} needs at least {MIN_GROUPS}"
            f" groups, found {len(groups)}",
        )
    rng = np.random.default_rng(seed)

    if len(held_out) > 0 and all(isinstance(h, str) for h in held_out):
        test_groups = [str(h) for h in held_out]
        unknown = sorted(set(test_groups) - set(groups))
        if unknown:
            raise ValidationException(
                ValidationExceptionCode.UnknownGroupId,
                f"Unknown {group_by.value} ids : {unknown}",
            )
        remaining = [g for g in groups if g not in set(test_groups)]
        if len(remaining) == 0:
            raise ValidationException(
                ValidationExceptionCode.InvalidSplit,
                "Holding out every group leaves nothing to train on",
            )
        remaining = [remaining[i] for i in rng.permutation(len(remaining))]
        n_validation = int(round(validation_ratio * len(remaining)))
        if validation_ratio > 0 and len(remaining) > 1:
            n_validation = max(1, n_validation)
        n_validation = min(n_validation, len(remaining) - 1)
        validation_groups = remaining[:n_validation]
        train_groups = remaining[n_validation:]
    else:
        _, ratio_validation, ratio_test = _check_ratios(
            [float(h) for h in held_out])
        shuffled = [groups[i] for i in rng.permutation(len(groups))]
        n_test = max(1, int(round(ratio_test * len(groups))))
        n_validation = int(round(ratio_validation * len(groups)))
        if ratio_validation > 0:
            n_validation = max(1, n_validation)
        n_validation = max(0, min(n_validation, len(groups) - n_test - 1))
        test_groups = shuffled[:n_test]
        validation_groups = shuffled[n_test:n_test + n_validation]
        train_groups = shuffled[n_test + n_validation:]

    side = {g: 0 for g in train_groups}
    side.update({g: 1 for g in validation_groups})
    side.update({g: 2 for g in test_groups})
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for index, group in enumerate(ids):
        parts[side[group]].append(index)
    logging.debug(
        f"Grouped split by {group_by.value}:"
        f" test groups {sorted(test_groups)}")
    return _as_split(parts, group_by)


def leave_one_driver_out(
    windows: WindowSet, seed: int, validation_ratio: float = 0.15
) -> list[DataSplit]:
    """One fold per driver, in sorted driver order."""
    return [
        split_grouped(
            windows, SplitProtocol.driver, [driver], seed, validation_ratio)
        for driver in sorted(set(windows.driver_ids))
    ]


def verify_split(split: DataSplit, windows: WindowSet) -> list[str]:
    """Returns human-readable violations; empty when the split is sound."""
    violations = []
    sides = {
        "train": split.train,
        "validation": split.validation,
        "test": split.test,
    }
    for name, indices in sides.items():
        if len(indices) and (
                indices.min() < 0 or indices.max() >= len(windows)):
            violations.append(f"{name} holds out-of-range window indices")
    names = list(sides)
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            shared = np.intersect1d(sides[first], sides[second])
            if len(shared):
                violations.append(
                    f"{len(shared)} windows in both {first} and {second}")
    if violations or split.protocol == SplitProtocol.stratified:
        return violations

    ids = _group_ids(windows, split.protocol)
    group_sets = {
        name: {ids[i] for i in indices} for name, indices in sides.items()}
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            leaked = sorted(group_sets[first] & group_sets[second])
            if leaked:
                violations.append(
                    f"{split.protocol.value} ids {leaked} appear in both"
                    f" {first} and {second}")
    return violations


def require_valid_split(split: DataSplit, windows: WindowSet) -> None:
    violations = verify_split(split, windows)
    if violations:
        raise ValidationException(
            ValidationExceptionCode.InvalidSplit, "; ".join(violations))
