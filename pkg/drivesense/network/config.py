from dataclasses import dataclass

from drivesense.event_class import NUM_CLASSES
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)


@dataclass(frozen=True)
class NetworkConfig:
    input_rows: int = 100
    input_channels: int = 10
    conv1_filters: int = 64
    conv1_kernel: int = 5
    conv2_filters: int = 128
    conv2_kernel: int = 3
    pool_size: int = 2
    lstm1_hidden: int = 64
    lstm2_hidden: int = 32
    dense1: int = 64
    dense2: int = 32
    classes: int = NUM_CLASSES
    dropout: float = 0.2
    recurrent_dropout: float = 0.2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self) -> None:
        problems = []
        if self.conv1_kernel % 2 == 0 or self.conv2_kernel % 2 == 0:
            problems.append("kernel sizes must be odd")
        if self.pool_size != 2:
            problems.append("pool_size must be 2")
        if self.input_rows < 4 or self.input_rows % 4 != 0:
            problems.append("input_rows must be a positive multiple of 4")
        if self.classes != NUM_CLASSES:
            problems.append(f"classes must be {NUM_CLASSES}")
        sizes = (
            self.input_channels, self.conv1_filters, self.conv2_filters,
            self.lstm1_hidden, self.lstm2_hidden, self.dense1, self.dense2,
        )
        if min(sizes) < 1:
            problems.append("layer sizes must be >= 1")
        if not (0 <= self.dropout < 1 and 0 <= self.recurrent_dropout < 1):
            problems.append("dropout rates must lie in [0, 1)")
        if not (self.bn_eps > 0 and 0 <= self.bn_momentum < 1):
            problems.append("expected bn_eps > 0 and bn_momentum in [0, 1)")
        if problems:
            raise ValidationException(
                ValidationExceptionCode.InvalidConfig,
                "model: " + "; ".join(problems),
            )

    @property
    def pooled_rows(self) -> int:
        return self.input_rows // (self.pool_size * self.pool_size)


def parameter_count(cfg: NetworkConfig) -> int:
    """Closed-form count of learnable values (running statistics excluded)."""

    def conv(kernel: int, fan_in: int, filters: int) -> int:
        return kernel * fan_in * filters + filters

    def lstm(fan_in: int, hidden: int) -> int:
        return 2 * 4 * hidden * (fan_in + hidden + 1)

    def dense(fan_in: int, units: int) -> int:
        return fan_in * units + units

    return (
        conv(cfg.conv1_kernel, cfg.input_channels, cfg.conv1_filters)
        + 2 * cfg.conv1_filters
        + conv(cfg.conv2_kernel, cfg.conv1_filters, cfg.conv2_filters)
        + 2 * cfg.conv2_filters
        + lstm(cfg.conv2_filters, cfg.lstm1_hidden)
        + 2 * cfg.lstm1_hidden + 1
        + lstm(2 * cfg.lstm1_hidden, cfg.lstm2_hidden)
        + dense(2 * cfg.lstm2_hidden, cfg.dense1)
        + 2 * cfg.dense1
        + dense(cfg.dense1, cfg.dense2)
        + dense(cfg.dense2, cfg.classes)
    )
