"""Binary checkpoint files.

Layout, all integers little-endian::

    b"AZSW"                 magic
    uint32                  format version
    uint32                  header length in bytes
    header                  UTF-8 JSON: config, tensor names/shapes, metadata
    float32 data            tensors concatenated in header order

Parameters are stored as float32, so a float32 model round-trips exactly.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .network import NetworkConfig, PolicyValueNet, param_names, param_shapes

MAGIC = b"AZSW"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save(model: PolicyValueNet, path: Union[str, Path], rng_state: str = "") -> None:
    names = param_names(model.config)
    header = {
        "config": model.config.to_dict(),
        "tensors": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "training_iteration": model.training_iteration,
        "rng_state": rng_state,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(head)))
        fh.write(head)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f4").tobytes())
    os.replace(tmp, path)


def load(path: Union[str, Path], action_count: Optional[int] = None) -> PolicyValueNet:
    """Read a checkpoint. ``action_count``, when given, must match the stored config."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, head_len = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if 12 + head_len > len(data):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + head_len].decode("utf-8"))
        config = NetworkConfig(**header["config"])
        tensors = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if action_count is not None and config.action_count != action_count:
        raise CheckpointError(
            f"{path}: action_count {config.action_count} does not match expected {action_count}")
    expected = param_shapes(config)
    offset = 12 + head_len
    params = {}
    for t in tensors:
        name, shape = t["name"], tuple(t["shape"])
        if expected.get(name) != shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {shape}, config implies "
                                  f"{expected.get(name)}")
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated tensor data at {name}")
        params[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4,
                                     offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    if set(params) != set(expected):
        raise CheckpointError(f"{path}: missing tensors {sorted(set(expected) - set(params))}")
    model = PolicyValueNet(config, params, int(header.get("training_iteration", 0)))
    model.check_finite()
    return model
