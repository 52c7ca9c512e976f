"""
Layer primitives as forward/backward pairs over ``(batch, time, channels)``
arrays. Every forward returns its output and the memory the matching
backward needs; backwards return the input gradient first, then parameter
gradients.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import BoolArray, FloatArray, IntArray


def _shape_error(message: str) -> ExecutionException:
    return ExecutionException(ExecutionExceptionCode.ShapeMismatch, message)


def sigmoid(x: FloatArray) -> FloatArray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def softmax(logits: FloatArray, axis: int = -1) -> FloatArray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def relu_forward(x: FloatArray) -> FloatArray:
    return np.maximum(x, 0.0)


def relu_backward(dout: FloatArray, x: FloatArray) -> FloatArray:
    return np.where(x > 0, dout, 0.0)


# convolution

def conv1d_forward(
    x: FloatArray, kernel: FloatArray, bias: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """
    Cross-correlation with zero "same" padding. ``kernel`` is
    ``(K, C_in, C_out)`` with K odd.
    """
    if x.ndim != 3 or kernel.ndim != 3 or x.shape[2] != kernel.shape[1]:
        raise _shape_error(
            f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    if bias.shape != (kernel.shape[2],):
        raise _shape_error(
            f"conv1d: bias {bias.shape} for {kernel.shape[2]} filters")
    width = kernel.shape[0]
    pad = width // 2
    padded = np.pad(x, ((0, 0), (pad, width - 1 - pad), (0, 0)))
    # (B, T, C_in, K)
    patches = sliding_window_view(padded, width, axis=1)
    out = np.einsum("btck,kco->bto", patches, kernel) + bias
    return out, patches


def conv1d_backward(
    dout: FloatArray, patches: FloatArray, kernel: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    width = kernel.shape[0]
    pad = width // 2
    batch, steps, _ = dout.shape
    dkernel = np.einsum("btck,bto->kco", patches, dout)
    dbias = dout.sum(axis=(0, 1))
    dpadded = np.zeros((batch, steps + width - 1, kernel.shape[1]))
    for k in range(width):
        dpadded[:, k:k + steps, :] += dout @ kernel[k].T
    return dpadded[:, pad:pad + steps, :], dkernel, dbias


# pooling

PoolMemory = tuple[IntArray, tuple[int, ...]]


def maxpool1d_forward(
    x: FloatArray, size: int = 2
) -> tuple[FloatArray, PoolMemory]:
    """Disjoint windows of ``size``; a trailing remainder is dropped."""
    batch, steps, channels = x.shape
    if steps < size:
        raise _shape_error(f"maxpool1d: {steps} steps, need >= {size}")
    pooled = steps // size
    grouped = x[:, :pooled * size].reshape(batch, pooled, size, channels)
    # argmax keeps the earliest index on ties
    winners = grouped.argmax(axis=2)
    out = np.take_along_axis(grouped, winners[:, :, None, :], axis=2)[:, :, 0]
    return out, (winners, x.shape)


def maxpool1d_backward(
    dout: FloatArray,
    memory: PoolMemory,
    size: int = 2,
) -> FloatArray:
    winners, input_shape = memory
    batch, pooled, channels = dout.shape
    dgrouped = np.zeros((batch, pooled, size, channels))
    np.put_along_axis(
        dgrouped, winners[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros(input_shape)
    dx[:, :pooled * size] = dgrouped.reshape(batch, pooled * size, channels)
    return dx


# batch normalisation

@dataclass
class BatchNormMemory:
    normalized: FloatArray
    inv_std: FloatArray
    axes: tuple[int, ...]


def batchnorm_forward(
    x: FloatArray,
    scale: FloatArray,
    shift: FloatArray,
    running_mean: FloatArray,
    running_var: FloatArray,
    train: bool,
    eps: float = 1e-5,
    momentum: float = 0.9,
) -> tuple[FloatArray, BatchNormMemory | None]:
    """
    Per-channel (last axis) normalisation over every other axis. In train
    mode the running statistics are updated in place.
    """
    if scale.shape != (x.shape[-1],):
        raise _shape_error(
            f"batchnorm: scale {scale.shape} for {x.shape[-1]} channels")
    axes = tuple(range(x.ndim - 1))
    if not train:
        normalized = (x - running_mean) / np.sqrt(running_var + eps)
        return scale * normalized + shift, None
    if x.shape[0] < 2:
        raise ValidationException(
            ValidationExceptionCode.BatchTooSmall,
            f"Batch normalisation needs a batch of at least 2 in training,"
            f" got {x.shape[0]}",
        )
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = (x - mean) * inv_std
    running_mean *= momentum
    running_mean += (1.0 - momentum) * mean
    running_var *= momentum
    running_var += (1.0 - momentum) * var
    memory = BatchNormMemory(normalized, inv_std, axes)
    return scale * normalized + shift, memory


def batchnorm_backward(
    dout: FloatArray, memory: BatchNormMemory, scale: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    axes = memory.axes
    count = dout.size // dout.shape[-1]
    dscale = (dout * memory.normalized).sum(axis=axes)
    dshift = dout.sum(axis=axes)
    dnormalized = dout * scale
    dx = (memory.inv_std / count) * (
        count * dnormalized
        - dnormalized.sum(axis=axes)
        - memory.normalized * (dnormalized * memory.normalized).sum(axis=axes)
    )
    return dx, dscale, dshift


# dropout

def dropout_mask(
    shape: tuple[int, ...], rate: float, rng: np.random.Generator
) -> FloatArray:
    """Inverted dropout: kept entries are scaled by ``1 / (1 - rate)``."""
    keep: BoolArray = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# recurrence

@dataclass
class LSTMMemory:
    x: FloatArray
    h_in: FloatArray
    c_prev: FloatArray
    i: FloatArray
    f: FloatArray
    g: FloatArray
    o: FloatArray
    tanh_c: FloatArray
    mask: FloatArray | None


def lstm_forward(
    x: FloatArray,
    W: FloatArray,
    U: FloatArray,
    b: FloatArray,
    mask: FloatArray | None = None,
) -> tuple[FloatArray, LSTMMemory]:
    """
    One direction scanning t = 0 .. T-1 from zero states. Gate blocks are
    ordered i, f, g, o. ``mask`` (B, H) multiplies the recurrent input.
    """
    batch, steps, fan_in = x.shape
    hidden = U.shape[0]
    if W.shape != (fan_in, 4 * hidden) or U.shape != (hidden, 4 * hidden):
        raise _shape_error(
            f"lstm: input {x.shape} with W {W.shape} and U {U.shape}")
    projected = x @ W + b
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    outputs = np.empty((batch, steps, hidden))
    h_in = np.empty_like(outputs)
    c_prev = np.empty_like(outputs)
    gates = np.empty((4, batch, steps, hidden))
    tanh_c = np.empty_like(outputs)
    for t in range(steps):
        recurrent = h if mask is None else h * mask
        z = projected[:, t] + recurrent @ U
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = sigmoid(z[:, 3 * hidden:])
        h_in[:, t] = recurrent
        c_prev[:, t] = c
        c = f * c + i * g
        tanh_c[:, t] = np.tanh(c)
        h = o * tanh_c[:, t]
        outputs[:, t] = h
        gates[:, :, t] = (i, f, g, o)
    memory = LSTMMemory(
        x, h_in, c_prev, gates[0], gates[1], gates[2], gates[3], tanh_c, mask)
    return outputs, memory


def lstm_backward(
    dout: FloatArray, memory: LSTMMemory, W: FloatArray, U: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    batch, steps, hidden = dout.shape
    dprojected = np.empty((batch, steps, 4 * hidden))
    dU = np.zeros_like(U)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        i = memory.i[:, t]
        f = memory.f[:, t]
        g = memory.g[:, t]
        o = memory.o[:, t]
        tanh_c = memory.tanh_c[:, t]
        dh = dout[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        dz = np.concatenate((
            dc * g * i * (1.0 - i),
            dc * memory.c_prev[:, t] * f * (1.0 - f),
            dc * i * (1.0 - g ** 2),
            dh * tanh_c * o * (1.0 - o),
        ), axis=1)
        dprojected[:, t] = dz
        dU += memory.h_in[:, t].T @ dz
        dh_next = dz @ U.T
        if memory.mask is not None:
            dh_next = dh_next * memory.mask
        dc_next = dc * f
    dW = np.einsum("btc,btg->cg", memory.x, dprojected)
    db = dprojected.sum(axis=(0, 1))
    dx = dprojected @ W.T
    return dx, dW, dU, db


@dataclass
class BiLSTMMemory:
    forward: LSTMMemory
    backward: LSTMMemory
    hidden: int


def bilstm_forward(
    x: FloatArray,
    forward_params: tuple[FloatArray, FloatArray, FloatArray],
    backward_params: tuple[FloatArray, FloatArray, FloatArray],
    forward_mask: FloatArray | None = None,
    backward_mask: FloatArray | None = None,
) -> tuple[FloatArray, BiLSTMMemory]:
    """``[forward_h_t ; backward_h_t]`` per step, aligned to input time."""
    ahead, ahead_memory = lstm_forward(x, *forward_params, forward_mask)
    behind, behind_memory = lstm_forward(
        x[:, ::-1], *backward_params, backward_mask)
    out = np.concatenate((ahead, behind[:, ::-1]), axis=2)
    return out, BiLSTMMemory(ahead_memory, behind_memory, ahead.shape[2])


def bilstm_backward(
    dout: FloatArray,
    memory: BiLSTMMemory,
    forward_params: tuple[FloatArray, FloatArray, FloatArray],
    backward_params: tuple[FloatArray, FloatArray, FloatArray],
) -> tuple[FloatArray, tuple[FloatArray, ...], tuple[FloatArray, ...]]:
    hidden = memory.hidden
    dx_ahead, *ahead_grads = lstm_backward(
        dout[:, :, :hidden], memory.forward,
        forward_params[0], forward_params[1])
    dx_behind, *behind_grads = lstm_backward(
        dout[:, ::-1, hidden:], memory.backward,
        backward_params[0], backward_params[1])
    return dx_ahead + dx_behind[:, ::-1], tuple(ahead_grads), tuple(
        behind_grads)


# attention

@dataclass
class AttentionMemory:
    hidden: FloatArray
    scores: FloatArray
    weights: FloatArray


def attention_forward(
    hidden: FloatArray, w: FloatArray, b: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray, AttentionMemory]:
    """
    ``e_t = tanh(w . h_t + b)``, ``alpha = softmax_t(e)``. Returns the
    weights, the weighted sequence ``alpha_t h_t`` and its sum over time.
    """
    if w.shape != (hidden.shape[2],) or b.shape != (1,):
        raise _shape_error(
            f"attention: hidden {hidden.shape} with w {w.shape}, b {b.shape}")
    scores = np.tanh(hidden @ w + b[0])
    weights = softmax(scores, axis=1)
    weighted = weights[:, :, None] * hidden
    context = weighted.sum(axis=1)
    return weights, weighted, context, AttentionMemory(hidden, scores, weights)


def attention_backward(
    dweighted: FloatArray,
    memory: AttentionMemory,
    w: FloatArray,
    dcontext: FloatArray | None = None,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    if dcontext is not None:
        dweighted = dweighted + dcontext[:, None, :]
    alpha = memory.weights
    dalpha = (dweighted * memory.hidden).sum(axis=2)
    dhidden = alpha[:, :, None] * dweighted
    dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dpre = dscores * (1.0 - memory.scores ** 2)
    dw = np.einsum("bt,btd->d", dpre, memory.hidden)
    db = np.array([dpre.sum()])
    dhidden += dpre[:, :, None] * w
    return dhidden, dw, db


# dense

def dense_forward(
    x: FloatArray, W: FloatArray, b: FloatArray
) -> FloatArray:
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise _shape_error(
            f"dense: input {x.shape} with W {W.shape}, b {b.shape}")
    return x @ W + b


def dense_backward(
    dout: FloatArray, x: FloatArray, W: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)
