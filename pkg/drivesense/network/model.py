"""
Convolutional, bidirectional-recurrent window classifier with temporal
attention.

conv1 -> BN -> ReLU -> pool -> dropout -> conv2 -> BN -> ReLU -> pool ->
dropout -> BiLSTM-1 -> attention -> (attention-weighted sequence) ->
BiLSTM-2 -> [last forward state ; first backward state] -> dense1 -> BN ->
ReLU -> dense2 -> ReLU -> dense -> softmax.
"""

import copy
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.typing import FloatArray

from . import layers
from .config import NetworkConfig, parameter_count

DIRECTIONS = ("fwd", "bwd")


class Mode(Enum):
    train = "train"
    eval = "eval"


@dataclass
class ModelParameters:
    config: NetworkConfig
    seed: int
    tensors: dict[str, FloatArray]
    buffers: dict[str, FloatArray]
    # bumped on every parameter update, caches remember it
    version: int = 0

    def count(self) -> int:
        return int(sum(tensor.size for tensor in self.tensors.values()))

    def clone(self) -> "ModelParameters":
        return copy.deepcopy(self)

    def lstm(
        self, name: str, direction: str
    ) -> tuple[FloatArray, FloatArray, FloatArray]:
        prefix = f"{name}.{direction}"
        return (
            self.tensors[f"{prefix}.W"],
            self.tensors[f"{prefix}.U"],
            self.tensors[f"{prefix}.b"],
        )


@dataclass
class ForwardCache:
    version: int
    batch_size: int
    conv1_patches: FloatArray
    bn1: layers.BatchNormMemory
    bn1_out: FloatArray
    pool1: layers.PoolMemory
    drop1: FloatArray
    conv2_patches: FloatArray
    bn2: layers.BatchNormMemory
    bn2_out: FloatArray
    pool2: layers.PoolMemory
    drop2: FloatArray
    lstm1: layers.BiLSTMMemory
    attention: layers.AttentionMemory
    lstm2: layers.BiLSTMMemory
    lstm2_steps: int
    representation: FloatArray
    bn3: layers.BatchNormMemory
    bn3_out: FloatArray
    z1: FloatArray
    dense2_pre: FloatArray
    z2: FloatArray
    probs: FloatArray
    attention_weights: FloatArray = field(repr=False)


def _he_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> FloatArray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def build_model(cfg: NetworkConfig, init_seed: int) -> ModelParameters:
    if not 0 <= init_seed < 2**64:
        raise ValidationException(
            ValidationExceptionCode.InvalidConfig,
            f"Seed must be an unsigned 64-bit integer : {init_seed}",
        )
    rng = np.random.default_rng(init_seed)
    tensors: dict[str, FloatArray] = {}
    buffers: dict[str, FloatArray] = {}

    def batchnorm(name: str, channels: int) -> None:
        tensors[f"{name}.scale"] = np.ones(channels)
        tensors[f"{name}.shift"] = np.zeros(channels)
        buffers[f"{name}.running_mean"] = np.zeros(channels)
        buffers[f"{name}.running_var"] = np.ones(channels)

    def lstm(name: str, fan_in: int, hidden: int) -> None:
        limit = 1.0 / np.sqrt(hidden)
        for direction in DIRECTIONS:
            prefix = f"{name}.{direction}"
            tensors[f"{prefix}.W"] = rng.uniform(
                -limit, limit, size=(fan_in, 4 * hidden))
            tensors[f"{prefix}.U"] = rng.uniform(
                -limit, limit, size=(hidden, 4 * hidden))
            bias = np.zeros(4 * hidden)
            bias[hidden:2 * hidden] = 1.0
            tensors[f"{prefix}.b"] = bias

    def dense(name: str, fan_in: int, units: int) -> None:
        tensors[f"{name}.W"] = _he_uniform(rng, (fan_in, units), fan_in)
        tensors[f"{name}.b"] = np.zeros(units)

    fan_in = cfg.conv1_kernel * cfg.input_channels
    tensors["conv1.kernel"] = _he_uniform(
        rng, (cfg.conv1_kernel, cfg.input_channels, cfg.conv1_filters), fan_in)
    tensors["conv1.bias"] = np.zeros(cfg.conv1_filters)
    batchnorm("bn1", cfg.conv1_filters)

    fan_in = cfg.conv2_kernel * cfg.conv1_filters
    tensors["conv2.kernel"] = _he_uniform(
        rng, (cfg.conv2_kernel, cfg.conv1_filters, cfg.conv2_filters), fan_in)
    tensors["conv2.bias"] = np.zeros(cfg.conv2_filters)
    batchnorm("bn2", cfg.conv2_filters)

    lstm("lstm1", cfg.conv2_filters, cfg.lstm1_hidden)
    attention_width = 2 * cfg.lstm1_hidden
    tensors["attention.w"] = _he_uniform(
        rng, (attention_width,), attention_width)
    tensors["attention.b"] = np.zeros(1)
    lstm("lstm2", attention_width, cfg.lstm2_hidden)

    dense("dense1", 2 * cfg.lstm2_hidden, cfg.dense1)
    batchnorm("bn3", cfg.dense1)
    dense("dense2", cfg.dense1, cfg.dense2)
    dense("out", cfg.dense2, cfg.classes)

    model = ModelParameters(cfg, init_seed, tensors, buffers)
    expected = parameter_count(cfg)
    if model.count() != expected:
        raise ExecutionException(
            ExecutionExceptionCode.ShapeMismatch,
            f"Built {model.count()} parameters, expected {expected}",
        )
    return model


def _check_batch(model: ModelParameters, batch: FloatArray) -> FloatArray:
    cfg = model.config
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1:] != (
            cfg.input_rows, cfg.input_channels):
        raise ExecutionException(
            ExecutionExceptionCode.ShapeMismatch,
            f"Expected batches of shape (B, {cfg.input_rows},"
            f" {cfg.input_channels}), got {batch.shape}",
        )
    return batch


def forward(
    model: ModelParameters,
    batch: FloatArray,
    mode: Mode = Mode.eval,
    rng: np.random.Generator | None = None,
) -> tuple[FloatArray, ForwardCache | None]:
    """
    Class probabilities for ``(B, rows, channels)`` windows. Train mode
    samples dropout masks from ``rng``, uses batch statistics, updates the
    running statistics and returns the cache for :func:`backward`.
    """
    x = _check_batch(model, batch)
    cfg = model.config
    p = model.tensors
    buffers = model.buffers
    train = mode == Mode.train
    if train and rng is None:
        rng = np.random.default_rng(model.seed)

    def batchnorm(
        name: str, value: FloatArray
    ) -> tuple[FloatArray, layers.BatchNormMemory | None]:
        return layers.batchnorm_forward(
            value, p[f"{name}.scale"], p[f"{name}.shift"],
            buffers[f"{name}.running_mean"], buffers[f"{name}.running_var"],
            train, cfg.bn_eps, cfg.bn_momentum,
        )

    def dropout(value: FloatArray) -> tuple[FloatArray, FloatArray]:
        if not train or cfg.dropout == 0:
            return value, np.ones(1)
        mask = layers.dropout_mask(value.shape, cfg.dropout, rng)
        return value * mask, mask

    def recurrent_masks(hidden: int) -> tuple[FloatArray | None, ...]:
        if not train or cfg.recurrent_dropout == 0:
            return (None, None)
        return tuple(
            layers.dropout_mask((len(x), hidden), cfg.recurrent_dropout, rng)
            for _ in DIRECTIONS
        )

    conv1, conv1_patches = layers.conv1d_forward(
        x, p["conv1.kernel"], p["conv1.bias"])
    bn1_out, bn1 = batchnorm("bn1", conv1)
    pooled1, pool1 = layers.maxpool1d_forward(
        layers.relu_forward(bn1_out), cfg.pool_size)
    dropped1, drop1 = dropout(pooled1)

    conv2, conv2_patches = layers.conv1d_forward(
        dropped1, p["conv2.kernel"], p["conv2.bias"])
    bn2_out, bn2 = batchnorm("bn2", conv2)
    pooled2, pool2 = layers.maxpool1d_forward(
        layers.relu_forward(bn2_out), cfg.pool_size)
    dropped2, drop2 = dropout(pooled2)

    masks1 = recurrent_masks(cfg.lstm1_hidden)
    sequence1, lstm1 = layers.bilstm_forward(
        dropped2, model.lstm("lstm1", "fwd"), model.lstm("lstm1", "bwd"),
        *masks1)
    weights, weighted, _, attention = layers.attention_forward(
        sequence1, p["attention.w"], p["attention.b"])
    masks2 = recurrent_masks(cfg.lstm2_hidden)
    sequence2, lstm2 = layers.bilstm_forward(
        weighted, model.lstm("lstm2", "fwd"), model.lstm("lstm2", "bwd"),
        *masks2)
    hidden2 = cfg.lstm2_hidden
    representation = np.concatenate(
        (sequence2[:, -1, :hidden2], sequence2[:, 0, hidden2:]), axis=1)

    dense1 = layers.dense_forward(
        representation, p["dense1.W"], p["dense1.b"])
    bn3_out, bn3 = batchnorm("bn3", dense1)
    z1 = layers.relu_forward(bn3_out)
    dense2_pre = layers.dense_forward(z1, p["dense2.W"], p["dense2.b"])
    z2 = layers.relu_forward(dense2_pre)
    logits = layers.dense_forward(z2, p["out.W"], p["out.b"])
    probs = layers.softmax(logits)

    if not train:
        return probs, None
    cache = ForwardCache(
        version=model.version,
        batch_size=len(x),
        conv1_patches=conv1_patches,
        bn1=bn1,
        bn1_out=bn1_out,
        pool1=pool1,
        drop1=drop1,
        conv2_patches=conv2_patches,
        bn2=bn2,
        bn2_out=bn2_out,
        pool2=pool2,
        drop2=drop2,
        lstm1=lstm1,
        attention=attention,
        lstm2=lstm2,
        lstm2_steps=sequence2.shape[1],
        representation=representation,
        bn3=bn3,
        bn3_out=bn3_out,
        z1=z1,
        dense2_pre=dense2_pre,
        z2=z2,
        probs=probs,
        attention_weights=weights,
    )
    return probs, cache


def backward(
    model: ModelParameters, cache: ForwardCache, dlogits: FloatArray
) -> dict[str, FloatArray]:
    """Gradients of every learnable tensor given dL/dlogits (B, classes)."""
    if cache.version != model.version:
        raise ExecutionException(
            ExecutionExceptionCode.StaleCache,
            f"Cache from parameter version {cache.version}, model is at"
            f" {model.version}",
        )
    cfg = model.config
    if dlogits.shape != (cache.batch_size, cfg.classes):
        raise ExecutionException(
            ExecutionExceptionCode.ShapeMismatch,
            f"Expected an output gradient of shape"
            f" ({cache.batch_size}, {cfg.classes}), got {dlogits.shape}",
        )
    p = model.tensors
    grads: dict[str, FloatArray] = {}

    dz2, grads["out.W"], grads["out.b"] = layers.dense_backward(
        dlogits, cache.z2, p["out.W"])
    ddense2 = layers.relu_backward(dz2, cache.dense2_pre)
    dz1, grads["dense2.W"], grads["dense2.b"] = layers.dense_backward(
        ddense2, cache.z1, p["dense2.W"])
    dbn3 = layers.relu_backward(dz1, cache.bn3_out)
    ddense1, grads["bn3.scale"], grads["bn3.shift"] = (
        layers.batchnorm_backward(dbn3, cache.bn3, p["bn3.scale"]))
    drepresentation, grads["dense1.W"], grads["dense1.b"] = (
        layers.dense_backward(ddense1, cache.representation, p["dense1.W"]))

    hidden2 = cfg.lstm2_hidden
    dsequence2 = np.zeros(
        (cache.batch_size, cache.lstm2_steps, 2 * hidden2))
    dsequence2[:, -1, :hidden2] = drepresentation[:, :hidden2]
    dsequence2[:, 0, hidden2:] = drepresentation[:, hidden2:]
    dweighted, lstm2_fwd, lstm2_bwd = layers.bilstm_backward(
        dsequence2, cache.lstm2,
        model.lstm("lstm2", "fwd"), model.lstm("lstm2", "bwd"))
    _store_lstm(grads, "lstm2", lstm2_fwd, lstm2_bwd)

    dsequence1, grads["attention.w"], grads["attention.b"] = (
        layers.attention_backward(
            dweighted, cache.attention, p["attention.w"]))
    ddropped2, lstm1_fwd, lstm1_bwd = layers.bilstm_backward(
        dsequence1, cache.lstm1,
        model.lstm("lstm1", "fwd"), model.lstm("lstm1", "bwd"))
    _store_lstm(grads, "lstm1", lstm1_fwd, lstm1_bwd)

    dpooled2 = ddropped2 * cache.drop2
    drelu2 = layers.maxpool1d_backward(dpooled2, cache.pool2, cfg.pool_size)
    dbn2 = layers.relu_backward(drelu2, cache.bn2_out)
    dconv2, grads["bn2.scale"], grads["bn2.shift"] = (
        layers.batchnorm_backward(dbn2, cache.bn2, p["bn2.scale"]))
    ddropped1, grads["conv2.kernel"], grads["conv2.bias"] = (
        layers.conv1d_backward(dconv2, cache.conv2_patches, p["conv2.kernel"]))

    dpooled1 = ddropped1 * cache.drop1
    drelu1 = layers.maxpool1d_backward(dpooled1, cache.pool1, cfg.pool_size)
    dbn1 = layers.relu_backward(drelu1, cache.bn1_out)
    dconv1, grads["bn1.scale"], grads["bn1.shift"] = (
        layers.batchnorm_backward(dbn1, cache.bn1, p["bn1.scale"]))
    _, grads["conv1.kernel"], grads["conv1.bias"] = layers.conv1d_backward(
        dconv1, cache.conv1_patches, p["conv1.kernel"])

    return {name: grads[name] for name in p}


def _store_lstm(
    grads: dict[str, FloatArray],
    name: str,
    ahead: tuple[FloatArray, ...],
    behind: tuple[FloatArray, ...],
) -> None:
    for direction, values in zip(DIRECTIONS, (ahead, behind)):
        for key, value in zip(("W", "U", "b"), values):
            grads[f"{name}.{direction}.{key}"] = value


def predict_proba(
    model: ModelParameters, windows: FloatArray, batch_size: int = 256
) -> FloatArray:
    """Eval-mode probabilities, batched to bound memory."""
    windows = np.asarray(windows, dtype=np.float64)
    if len(windows) == 0:
        return np.zeros((0, model.config.classes))
    return np.concatenate([
        forward(model, windows[start:start + batch_size], Mode.eval)[0]
        for start in range(0, len(windows), batch_size)
    ])
