import numpy as np

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import FloatArray, IntArray

from .config import LossSettings

PROB_FLOOR = 1e-12


def focal_loss(
    probs: FloatArray, labels: IntArray, settings: LossSettings
) -> tuple[float, FloatArray]:
    """
    Mean of ``-alpha_y (1 - p_t)^gamma_y log p_t`` over the batch, and its
    gradient with respect to the logits that produced ``probs``.

    With ``gamma == 0`` this is the alpha-weighted cross-entropy.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    batch, classes = probs.shape
    if labels.shape != (batch,):
        raise ExecutionException(
            ExecutionExceptionCode.ShapeMismatch,
            f"{labels.shape} labels for {batch} predictions",
        )
    if batch == 0:
        return 0.0, np.zeros_like(probs)
    if labels.min() < 0 or labels.max() >= classes:
        raise ValidationException(
            ValidationExceptionCode.LabelOutOfRange,
            f"Labels must lie in [0, {classes})",
        )
    alpha = np.asarray(settings.alpha, dtype=np.float64)[labels]
    gamma = np.asarray(settings.gamma, dtype=np.float64)[labels]

    rows = np.arange(batch)
    p_t = np.clip(probs[rows, labels], PROB_FLOOR, 1.0)
    log_p = np.log(p_t)
    remainder = 1.0 - p_t
    modulation = remainder ** gamma
    losses = -alpha * modulation * log_p

    # d(loss)/d(p_t) * p_t, the factor that multiplies (onehot - p)
    # the (1 - p_t)^(gamma - 1) term vanishes for gamma == 0 or p_t == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        focusing = np.where(
            (gamma > 0) & (remainder > 0),
            gamma * remainder ** (gamma - 1.0) * p_t * log_p,
            0.0,
        )
    scale = alpha * (focusing - modulation)
    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0
    dlogits = scale[:, None] * (onehot - probs) / batch
    return float(losses.mean()), dlogits
