import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

CONTAINER_VERSION = 1
HEADER_SIZE_BYTES = 4


def encode_container(
    kind: str,
    header: dict[str, Any],
    tensors: dict[str, npt.NDArray[Any]],
) -> bytes:
    """
    ``<u4 header length> <JSON header> <raw little-endian tensors>``.
    Each tensor is recorded in the header's manifest with its dtype, shape
    and byte offset into the payload.
    """
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in tensors.items():
        array = np.ascontiguousarray(tensor)
        little_endian = array.dtype.newbyteorder("<")
        raw = array.astype(little_endian, copy=False).tobytes()
        manifest.append({
            "name": name,
            "dtype": little_endian.str,
            "shape": list(array.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)

    document = dict(header)
    document["format"] = kind
    document["version"] = CONTAINER_VERSION
    document["tensors"] = manifest
    encoded_header = json.dumps(document, sort_keys=True).encode()
    prefix = len(encoded_header).to_bytes(HEADER_SIZE_BYTES, "little")
    return prefix + encoded_header + b"".join(chunks)


def write_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    descriptor, temporary = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(descriptor, "wb") as handle:
            handle.write(data)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
