import json
from typing import Any

import numpy as np
import numpy.typing as npt

from drivesense.exceptions import ExecutionException, ExecutionExceptionCode

from .encode import CONTAINER_VERSION, HEADER_SIZE_BYTES


def _corrupt(message: str) -> ExecutionException:
    return ExecutionException(ExecutionExceptionCode.CorruptContainer, message)


def decode_container(
    data: bytes, kind: str
) -> tuple[dict[str, Any], dict[str, npt.NDArray[Any]]]:
    if len(data) < HEADER_SIZE_BYTES:
        raise _corrupt("Container shorter than its length prefix")
    size = int.from_bytes(data[:HEADER_SIZE_BYTES], "little")
    body_start = HEADER_SIZE_BYTES + size
    if body_start > len(data):
        raise _corrupt(
            f"Header length {size} exceeds container size {len(data)}")
    try:
        header = json.loads(data[HEADER_SIZE_BYTES:body_start])
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise _corrupt(f"Unreadable container header : {err}")

    if header.get("format") != kind:
        raise _corrupt(
            f"Expected a {kind} container, found {header.get('format')!r}")
    if header.get("version") != CONTAINER_VERSION:
        raise _corrupt(
            f"Unsupported container version {header.get('version')}")

    payload = memoryview(data)[body_start:]
    tensors = {}
    for entry in header.get("tensors", []):
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        start, nbytes = entry["offset"], entry["nbytes"]
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected or start + nbytes > len(payload):
            raise _corrupt(
                f"Tensor {entry['name']} of shape {shape} does not fit"
                f" the payload")
        tensors[entry["name"]] = np.frombuffer(
            payload[start:start + nbytes], dtype=dtype).reshape(shape).copy()
    return header, tensors
