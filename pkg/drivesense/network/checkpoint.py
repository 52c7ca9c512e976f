import dataclasses
import logging
from pathlib import Path
from typing import Any

import numpy as np

from drivesense.exceptions import ExecutionException, ExecutionExceptionCode
from drivesense.utils.decode import decode_container
from drivesense.utils.encode import encode_container, write_atomic

from .config import NetworkConfig
from .model import ModelParameters, build_model

CONTAINER_KIND = "drivesense.checkpoint"
BUFFER_PREFIX = "buffer:"


def encode_checkpoint(
    model: ModelParameters, extra: dict[str, Any] | None = None
) -> bytes:
    header = {
        "config": dataclasses.asdict(model.config),
        "seed": model.seed,
        "extra": extra or {},
    }
    tensors = {
        name: tensor.astype("<f4") for name, tensor in model.tensors.items()}
    tensors.update({
        BUFFER_PREFIX + name: buffer.astype("<f4")
        for name, buffer in model.buffers.items()
    })
    return encode_container(CONTAINER_KIND, header, tensors)


def save_checkpoint(
    model: ModelParameters,
    path: str | Path,
    extra: dict[str, Any] | None = None,
) -> None:
    write_atomic(path, encode_checkpoint(model, extra))
    logging.info(f"Saved checkpoint with {model.count()} parameters to {path}")


def load_checkpoint(
    path: str | Path,
) -> tuple[ModelParameters, dict[str, Any]]:
    header, stored = decode_container(Path(path).read_bytes(), CONTAINER_KIND)
    try:
        config = NetworkConfig(**header["config"])
        seed = int(header["seed"])
    except (KeyError, TypeError) as err:
        raise ExecutionException(
            ExecutionExceptionCode.CorruptContainer,
            f"{path}: unreadable checkpoint header : {err}",
        )
    tensors = {}
    buffers = {}
    for name, value in stored.items():
        if name.startswith(BUFFER_PREFIX):
            buffers[name[len(BUFFER_PREFIX):]] = value.astype(np.float64)
        else:
            tensors[name] = value.astype(np.float64)
    model = ModelParameters(config, seed, tensors, buffers)
    # shapes must match a freshly built model of the same config
    reference = build_model(config, seed)
    for group, expected, found in (
        ("tensor", reference.tensors, tensors),
        ("buffer", reference.buffers, buffers),
    ):
        if set(expected) != set(found):
            raise ExecutionException(
                ExecutionExceptionCode.CorruptContainer,
                f"{path}: {group} names do not match the configured network",
            )
        for name, value in expected.items():
            if value.shape != found[name].shape:
                raise ExecutionException(
                    ExecutionExceptionCode.CorruptContainer,
                    f"{path}: {name} has shape {found[name].shape},"
                    f" expected {value.shape}",
                )
    return model, header.get("extra", {})
