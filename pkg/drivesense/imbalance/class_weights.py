from dataclasses import dataclass
from typing import Sequence

import numpy as np

from drivesense.event_class import EventClass
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import FloatArray, IntArray

# per class: normal, harsh_accel, harsh_brake, harsh_turn
DEFAULT_BOOST = (1.0, 1.0, 1.25, 1.25)


@dataclass(frozen=True, eq=False)
class ClassWeights:
    weights: FloatArray
    normalized: bool = True

    def __getitem__(self, event_class: int) -> float:
        return float(self.weights[event_class])

    def to_json(self) -> dict[str, float]:
        return {c.slug: float(self.weights[c]) for c in EventClass}


def base_class_weights(counts: IntArray | Sequence[int]) -> FloatArray:
    counts = np.asarray(counts, dtype=np.float64)
    empty = np.flatnonzero(counts <= 0)
    if len(empty) > 0:
        raise ValidationException(
            ValidationExceptionCode.EmptyClass,
            f"Class {EventClass(int(empty[0])).slug} has no training windows",
        )
    return counts.sum() / (len(counts) * counts)


def compute_class_weights(
    counts: IntArray | Sequence[int],
    boost: Sequence[float] = DEFAULT_BOOST,
) -> ClassWeights:
    """Inverse-frequency weights scaled by ``boost``, then mean-normalised."""
    weights = base_class_weights(counts) * np.asarray(boost, dtype=np.float64)
    return ClassWeights(weights / weights.mean())
