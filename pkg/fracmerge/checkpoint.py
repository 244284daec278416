
import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch

from fracmerge.load_error import LoadError

logger = logging.getLogger(__name__)

MAGIC = b"FMCK"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    """Named tensors plus the metadata needed to rebuild the model that owns
    them."""

    kind: str
    config: dict[str, Any]
    step: int
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)


def config_hash(config: dict[str, Any]) -> str:
    encoded = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def _little_endian(array: np.ndarray) -> np.ndarray:
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def write_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Writes a checkpoint container.

    Layout: the magic bytes `FMCK`, a little-endian uint32 format version and
    a uint64 header length, then a UTF-8 JSON header (kind, config, config
    hash, step and for each tensor its name, dtype, shape and byte offset),
    then the raw little-endian tensor bytes. Reading back is bit-exact.
    """
    blobs: list[bytes] = []
    entries = []
    offset = 0
    for name, tensor in checkpoint.tensors.items():
        array = _little_endian(tensor.detach().cpu().contiguous().numpy())
        blob = array.tobytes()
        entries.append({"name": name, "dtype": array.dtype.str,
                        "shape": list(array.shape), "offset": offset,
                        "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        "kind": checkpoint.kind,
        "config": checkpoint.config,
        "config_hash": checkpoint.config_hash,
        "step": checkpoint.step,
        "tensors": entries,
    }).encode("utf-8")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as file:
        file.write(_PREFIX.pack(MAGIC, CHECKPOINT_VERSION, len(header)))
        file.write(header)
        for blob in blobs:
            file.write(blob)
    logger.info("Wrote %s checkpoint at step %d to %s", checkpoint.kind,
                checkpoint.step, path)


def read_checkpoint(path: str, kind: str) -> Checkpoint:
    """Reads a checkpoint written by `write_checkpoint`.

    Parameters
    ----------
    path : str
        The checkpoint file.
    kind : str
        Expected model kind, e.g. "autoencoder".

    Raises
    ------
    LoadError
        If the file is missing, truncated, of another version or kind, or its
        config does not match the stored hash.
    """
    try:
        with open(path, "rb") as file:
            data = file.read()
    except OSError as e:
        raise LoadError(path, f"cannot read checkpoint ({e})")
    if len(data) < _PREFIX.size:
        raise LoadError(path, "truncated checkpoint")
    magic, version, header_size = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise LoadError(path, "not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise LoadError(path, f"checkpoint version {version}, expected " +
                        f"{CHECKPOINT_VERSION}")
    body_start = _PREFIX.size + header_size
    try:
        header = json.loads(data[_PREFIX.size:body_start].decode("utf-8"))
    except ValueError as e:
        raise LoadError(path, f"unreadable header ({e})")
    if header["kind"] != kind:
        raise LoadError(path, f"holds a {header['kind']} model, " +
                        f"expected {kind}")
    if config_hash(header["config"]) != header["config_hash"]:
        raise LoadError(path, "config does not match its hash")
    tensors: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        start = body_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(data):
            raise LoadError(path, f"tensor {entry['name']} is truncated")
        array = np.frombuffer(data[start:end], dtype=np.dtype(entry["dtype"]))
        array = array.reshape(entry["shape"]).astype(
            array.dtype.newbyteorder("="))
        tensors[entry["name"]] = torch.from_numpy(array)
    return Checkpoint(header["kind"], header["config"], header["step"],
                      tensors)


def save_module(path: str, kind: str, module: torch.nn.Module,
                config: dict[str, Any], step: int) -> None:
    write_checkpoint(path, Checkpoint(kind, config, step,
                                      dict(module.state_dict())))


def load_module_state(module: torch.nn.Module, checkpoint: Checkpoint,
                      path: str) -> None:
    try:
        module.load_state_dict(checkpoint.tensors)
    except RuntimeError as e:
        raise LoadError(path, f"tensors do not fit the model ({e})")
