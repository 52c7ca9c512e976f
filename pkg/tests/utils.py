import numpy as np

from drivesense.telemetry.session import TelemetrySession
from drivesense.windowing.window_set import WindowSet


def make_session(
    n: int,
    speed: float = 50 / 3.6,
    a_long: float | np.ndarray = 0.0,
    a_lat: float | np.ndarray = 0.0,
    brake: float | np.ndarray = 0.0,
    throttle: float | np.ndarray = 0.0,
    rate: float = 25.0,
    session_id: str = "s-0",
    driver_id: str = "d-0",
) -> TelemetrySession:
    """SI session with constant or given channel values."""

    def channel(value: float | np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(value, dtype=np.float64), (n,))

    return TelemetrySession(
        session_id=session_id,
        driver_id=driver_id,
        t=np.arange(n) / rate,
        speed=channel(speed),
        a_long=channel(a_long),
        a_lat=channel(a_lat),
        brake=channel(brake),
        throttle=channel(throttle),
        sample_rate_hz=rate,
    )


def make_window_set(
    labels: list[int],
    drivers: list[str] | None = None,
    sessions: list[str] | None = None,
    rows: int = 8,
    channels: int = 2,
    seed: int = 0,
) -> WindowSet:
    """Random windows whose first channel is shifted by the label."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    labels_array = np.asarray(labels, dtype=np.int64)
    features = rng.standard_normal((n, rows, channels))
    features[:, :, 0] += 2.0 * labels_array[:, None]
    drivers = drivers or [f"driver-{i % 3}" for i in range(n)]
    sessions = sessions or [f"session-{d}" for d in drivers]
    return WindowSet(
        features=features,
        labels=labels_array,
        session_ids=tuple(sessions),
        driver_ids=tuple(drivers),
        start_t=np.arange(n, dtype=np.float64),
        sample_rate_hz=25.0,
        channels=tuple(f"c{i}" for i in range(channels)),
    )


def numerical_gradient(loss, array: np.ndarray, step: float = 1e-5):
    """Central differences of ``loss()`` with respect to ``array`` in place."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + step
        upper = loss()
        array[index] = original - step
        lower = loss()
        array[index] = original
        grad[index] = (upper - lower) / (2 * step)
    return grad
