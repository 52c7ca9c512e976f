from dataclasses import dataclass, field

import numpy as np

from drivesense.exceptions import ExecutionException, ExecutionExceptionCode
from drivesense.typing import FloatArray

from .config import OptimizerConfig, ScheduleConfig


@dataclass
class AdamWState:
    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)
    step: int = 0


def adamw_step(
    params: dict[str, FloatArray],
    grads: dict[str, FloatArray],
    state: AdamWState,
    cfg: OptimizerConfig,
    lr: float | None = None,
) -> tuple[dict[str, FloatArray], AdamWState]:
    """
    One in-place AdamW update of every tensor in ``params``. Weight decay is
    decoupled from the adaptive term and applied to every tensor.
    """
    lr = cfg.lr if lr is None else lr
    state.step += 1
    correction1 = 1.0 - cfg.beta1 ** state.step
    correction2 = 1.0 - cfg.beta2 ** state.step
    for name, theta in params.items():
        grad = grads[name]
        if grad.shape != theta.shape:
            raise ExecutionException(
                ExecutionExceptionCode.ShapeMismatch,
                f"Gradient for {name} has shape {grad.shape},"
                f" parameter has {theta.shape}",
            )
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        theta -= lr * (
            m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * theta)
    return params, state


class EarlyStopping:
    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best: float | None = None
        self.counter = 0
        self.should_stop = False

    def step(self, metric: float) -> bool:
        """Returns True when ``metric`` is a new best."""
        if self.best is None or self.best - metric > self.min_delta:
            self.best = metric
            self.counter = 0
            return True
        self.counter += 1
        if self.counter >= self.patience:
            self.should_stop = True
        return False


class PlateauScheduler:
    """Multiplies the learning rate by ``factor`` after ``patience`` epochs
    without improvement, never going below ``min_lr``."""

    def __init__(self, lr: float, cfg: ScheduleConfig):
        self.lr = lr
        self.factor = cfg.plateau_factor
        self.patience = cfg.plateau_patience
        self.min_lr = cfg.min_lr
        self.min_delta = cfg.min_delta
        self.best: float | None = None
        self.counter = 0

    def step(self, metric: float) -> float:
        if self.best is None or self.best - metric > self.min_delta:
            self.best = metric
            self.counter = 0
            return self.lr
        self.counter += 1
        if self.counter >= self.patience:
            self.lr = min(self.lr, max(self.lr * self.factor, self.min_lr))
            self.counter = 0
        return self.lr
