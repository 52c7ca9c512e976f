import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.metrics.metrics import WINDOW_FORWARD_TIME
from drivesense.network.model import ModelParameters, Mode, forward

from .config import MIN_BENCH_WARMUP, MIN_BENCH_WINDOWS

FLOAT32_BYTES = 4


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    windows: int
    warmup: int
    batch_size: int
    parameters: int
    float32_mb: float

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))


def latency_benchmark(
    model: ModelParameters, n_windows: int, warmup: int, seed: int = 0
) -> LatencyStats:
    """
    Times ``n_windows`` batch-1 eval-mode forwards on random inputs after
    ``warmup`` untimed ones.
    """
    if n_windows < MIN_BENCH_WINDOWS or warmup < MIN_BENCH_WARMUP:
        raise ValidationException(
            ValidationExceptionCode.InvalidBenchmark,
            f"Benchmark needs >= {MIN_BENCH_WINDOWS} windows and"
            f" >= {MIN_BENCH_WARMUP} warmup runs, got {n_windows}/{warmup}",
        )
    cfg = model.config
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal(
        (warmup + n_windows, 1, cfg.input_rows, cfg.input_channels))
    for window in inputs[:warmup]:
        forward(model, window, Mode.eval)

    timings_ns = np.empty(n_windows, dtype=np.int64)
    for i, window in enumerate(inputs[warmup:]):
        started = time.perf_counter_ns()
        forward(model, window, Mode.eval)
        timings_ns[i] = time.perf_counter_ns() - started
        WINDOW_FORWARD_TIME.observe(timings_ns[i] / 1e9)

    timings_ms = timings_ns / 1e6
    parameters = model.count()
    stats = LatencyStats(
        mean_ms=float(timings_ms.mean()),
        p50_ms=float(np.percentile(timings_ms, 50)),
        p95_ms=float(np.percentile(timings_ms, 95)),
        windows=n_windows,
        warmup=warmup,
        batch_size=1,
        parameters=parameters,
        float32_mb=parameters * FLOAT32_BYTES / 1e6,
    )
    logging.info(
        f"Latency over {n_windows} windows: mean {stats.mean_ms:.3f} ms,"
        f" p50 {stats.p50_ms:.3f} ms, p95 {stats.p95_ms:.3f} ms"
    )
    return stats
