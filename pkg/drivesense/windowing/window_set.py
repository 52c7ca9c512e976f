"""
Fixed-length labelled windows and their binary container.

A window starting at sample ``s`` takes its features from
``[s, s + rows)`` and its label from ``[s + h, s + h + rows)`` where ``h``
is the prediction horizon in samples.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from drivesense.event_class import AGGRESSIVE_PRIORITY, NUM_CLASSES, EventClass
from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.frame import FEATURE_CHANNELS, FeatureFrame, SplitTag
from drivesense.metrics.metrics import WINDOWS_EMITTED
from drivesense.typing import DriverId, FloatArray, IntArray, SessionId
from drivesense.utils.decode import decode_container
from drivesense.utils.encode import encode_container, write_atomic

from .config import WindowConfig

CONTAINER_KIND = "drivesense.windows"


@dataclass(frozen=True)
class SyntheticOrigin:
    """A window interpolated between two same-class training windows."""

    index: int
    anchor: int
    neighbour: int
    lam: float


@dataclass(frozen=True)
class LabeledWindow:
    features: FloatArray
    label: EventClass
    session_id: str
    driver_id: str
    start_t: float


@dataclass(frozen=True, eq=False)
class WindowSet:
    features: FloatArray  # (windows, rows, channels)
    labels: IntArray
    session_ids: tuple[str, ...]
    driver_ids: tuple[str, ...]
    start_t: FloatArray
    sample_rate_hz: float
    channels: tuple[str, ...] = FEATURE_CHANNELS
    normalized: bool = False
    split_tag: SplitTag = SplitTag.unassigned
    provenance: tuple[SyntheticOrigin, ...] = field(default=())

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        start_t = np.asarray(self.start_t, dtype=np.float64)
        if features.ndim != 3 or features.shape[2] != len(self.channels):
            raise ExecutionException(
                ExecutionExceptionCode.ShapeMismatch,
                f"Window features of shape {features.shape} do not match"
                f" {len(self.channels)} channels",
            )
        n = features.shape[0]
        if not (
            len(labels) == len(self.session_ids) == len(self.driver_ids)
            == len(start_t) == n
        ):
            raise ExecutionException(
                ExecutionExceptionCode.ShapeMismatch,
                f"Window set of {n} windows has mismatched metadata lengths",
            )
        if n > 0 and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            raise ValidationException(
                ValidationExceptionCode.LabelOutOfRange,
                f"Window labels must lie in [0, {NUM_CLASSES})",
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "start_t", start_t)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __iter__(self) -> Iterator[LabeledWindow]:
        for i in range(len(self)):
            yield LabeledWindow(
                self.features[i], EventClass(int(self.labels[i])),
                self.session_ids[i], self.driver_ids[i],
                float(self.start_t[i]),
            )

    @property
    def rows(self) -> int:
        return self.features.shape[1]

    @property
    def num_channels(self) -> int:
        return self.features.shape[2]

    def class_counts(self) -> IntArray:
        return np.bincount(self.labels, minlength=NUM_CLASSES)

    def subset(
        self, indices: Sequence[int] | IntArray, split_tag: SplitTag
    ) -> "WindowSet":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[indices],
            labels=self.labels[indices],
            session_ids=tuple(self.session_ids[i] for i in indices),
            driver_ids=tuple(self.driver_ids[i] for i in indices),
            start_t=self.start_t[indices],
            split_tag=split_tag,
            provenance=(),
        )

    def as_frames(self) -> list[FeatureFrame]:
        """Each window as a frame carrying this set's split tag."""
        return [
            FeatureFrame(
                values=self.features[i],
                session_id=SessionId(self.session_ids[i]),
                driver_id=DriverId(self.driver_ids[i]),
                sample_rate_hz=self.sample_rate_hz,
                channels=self.channels,
                split_tag=self.split_tag,
                t0=float(self.start_t[i]),
            )
            for i in range(len(self))
        ]

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        if len(sets) == 0:
            raise ValidationException(
                ValidationExceptionCode.SessionTooShort,
                "No windows to concatenate",
            )
        first = sets[0]
        for other in sets[1:]:
            if (
                other.channels != first.channels
                or other.rows != first.rows
                or other.sample_rate_hz != first.sample_rate_hz
            ):
                raise ValidationException(
                    ValidationExceptionCode.ChannelMismatch,
                    "Window sets disagree on channels, rows or sample rate",
                )
        return replace(
            first,
            features=np.concatenate([s.features for s in sets]),
            labels=np.concatenate([s.labels for s in sets]),
            session_ids=tuple(i for s in sets for i in s.session_ids),
            driver_ids=tuple(i for s in sets for i in s.driver_ids),
            start_t=np.concatenate([s.start_t for s in sets]),
            provenance=(),
        )


def assign_window_label(
    label_slice: IntArray,
    window_features: FloatArray,
    cfg: WindowConfig,
    channels: tuple[str, ...] = FEATURE_CHANNELS,
) -> EventClass:
    """
    Sustained aggressive content wins over the majority, and extreme raw
    dynamics (SI units) override both.
    """
    label_slice = np.asarray(label_slice, dtype=np.int64)
    counts = np.bincount(label_slice, minlength=NUM_CLASSES)
    sustained = [
        event_class for event_class in AGGRESSIVE_PRIORITY
        if counts[event_class] >= cfg.vote_fraction * len(label_slice)
    ]
    if sustained:
        label = sustained[0]
    else:
        label = EventClass(int(np.argmax(counts)))

    def column(name: str) -> FloatArray:
        return window_features[:, channels.index(name)]

    speed = column("speed")
    a_long = column("a_long")
    a_lat = column("a_lat")
    brake = column("brake")
    throttle = column("throttle")
    overrides = {
        EventClass.HarshTurn: np.any(
            (np.abs(a_lat) >= cfg.lat_si) & (speed > cfg.v_turn_si)),
        EventClass.HarshBrake: np.any(
            (-a_long >= cfg.decel_si)
            & (brake >= cfg.override_pedal)
            & (speed > cfg.v_min_si)),
        EventClass.HarshAccel: np.any(
            (a_long >= cfg.accel_si) & (throttle >= cfg.override_pedal)),
    }
    for event_class in AGGRESSIVE_PRIORITY:
        if overrides[event_class]:
            return event_class
    return label


def segment(
    frame: FeatureFrame, labels: IntArray, cfg: WindowConfig
) -> WindowSet:
    """``frame`` must hold raw (not normalised) SI channels."""
    n = len(frame)
    if len(labels) != n:
        raise ExecutionException(
            ExecutionExceptionCode.ShapeMismatch,
            f"Session {frame.session_id}: {len(labels)} labels for {n}"
            f" feature rows",
        )
    rate = frame.sample_rate_hz
    rows = cfg.rows(rate)
    stride = cfg.stride_rows(rate)
    horizon = cfg.horizon_rows(rate)
    last_start = n - horizon - rows
    if last_start < 0:
        raise ValidationException(
            ValidationExceptionCode.SessionTooShort,
            f"Session {frame.session_id} has {n} samples, a window at"
            f" horizon {cfg.H}s needs {rows + horizon}",
        )
    starts = np.arange(0, last_start + 1, stride)
    offsets = np.arange(rows)
    features = frame.values[starts[:, None] + offsets]
    label_rows = starts[:, None] + horizon + offsets
    window_labels = np.array(
        [
            int(assign_window_label(
                labels[label_rows[i]],
                frame.values[label_rows[i]],
                cfg,
                frame.channels,
            ))
            for i in range(len(starts))
        ],
        dtype=np.int64,
    )
    for event_class in EventClass:
        WINDOWS_EMITTED.labels(event_class.slug).inc(
            int(np.sum(window_labels == event_class)))
    logging.debug(
        f"Segmented session {frame.session_id} into {len(starts)} windows")
    return WindowSet(
        features=features,
        labels=window_labels,
        session_ids=(str(frame.session_id),) * len(starts),
        driver_ids=(str(frame.driver_id),) * len(starts),
        start_t=frame.t0 + starts / rate,
        sample_rate_hz=rate,
        channels=frame.channels,
        split_tag=frame.split_tag,
    )


def save_window_set(windows: WindowSet, path: str | Path) -> None:
    header = {
        "channels": list(windows.channels),
        "sample_rate_hz": windows.sample_rate_hz,
        "rows": windows.rows,
        "classes": {c.slug: int(c) for c in EventClass},
        "class_counts": windows.class_counts().tolist(),
        "session_ids": list(windows.session_ids),
        "driver_ids": list(windows.driver_ids),
        "normalized": windows.normalized,
        "split_tag": windows.split_tag.value,
        "provenance": [
            [o.index, o.anchor, o.neighbour, o.lam]
            for o in windows.provenance
        ],
    }
    data = encode_container(
        CONTAINER_KIND,
        header,
        {
            "features": windows.features.astype("<f4"),
            "labels": windows.labels.astype("<i4"),
            "start_t": windows.start_t.astype("<f8"),
        },
    )
    write_atomic(path, data)


def load_window_set(path: str | Path) -> WindowSet:
    header, tensors = decode_container(Path(path).read_bytes(), CONTAINER_KIND)
    try:
        return WindowSet(
            features=tensors["features"].astype(np.float64),
            labels=tensors["labels"].astype(np.int64),
            session_ids=tuple(header["session_ids"]),
            driver_ids=tuple(header["driver_ids"]),
            start_t=tensors["start_t"],
            sample_rate_hz=float(header["sample_rate_hz"]),
            channels=tuple(header["channels"]),
            normalized=bool(header["normalized"]),
            split_tag=SplitTag(header["split_tag"]),
            provenance=tuple(
                SyntheticOrigin(int(i), int(a), int(b), float(lam))
                for i, a, b, lam in header["provenance"]
            ),
        )
    except KeyError as err:
        raise ExecutionException(
            ExecutionExceptionCode.CorruptContainer,
            f"{path}: window container lacks {err}",
        )
