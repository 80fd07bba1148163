"""Checkpoint container.

Layout: an 8-byte little-endian header length, a UTF-8 JSON header, then every tensor as
little-endian float32 in name order. The header carries the format version, the model and
training configs, the step counter and a manifest of ``{name: {shape, offset, nbytes}}``
with offsets relative to the start of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from deskdet.constants import CHECKPOINT_VERSION
from deskdet.exceptions import CheckpointFormatError
from deskdet.logging import logger

_LENGTH = struct.Struct("<Q")
_PAYLOAD_DTYPE = np.dtype("<f4")


class TensorEntry(BaseModel):
    shape: list[int]
    offset: int = Field(ge=0)
    nbytes: int = Field(ge=0)


class CheckpointHeader(BaseModel):
    version: int
    model: dict[str, Any]
    train: dict[str, Any] | None = None
    step: int = Field(default=0, ge=0)
    manifest: dict[str, TensorEntry]


class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: dict[str, Any]
    train: dict[str, Any] | None = None
    step: int = 0
    tensors: dict[str, np.ndarray]


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    manifest: dict[str, TensorEntry] = {}
    chunks: list[bytes] = []
    offset = 0
    for name in sorted(checkpoint.tensors):
        data = np.ascontiguousarray(checkpoint.tensors[name], dtype=_PAYLOAD_DTYPE).tobytes()
        manifest[name] = TensorEntry(shape=list(np.shape(checkpoint.tensors[name])), offset=offset, nbytes=len(data))
        chunks.append(data)
        offset += len(data)
    header = CheckpointHeader(
        version=CHECKPOINT_VERSION,
        model=checkpoint.model,
        train=checkpoint.train,
        step=checkpoint.step,
        manifest=manifest,
    )
    encoded = json.dumps(header.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LENGTH.pack(len(encoded)) + encoded + b"".join(chunks)


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(data) < _LENGTH.size:
        msg = f"{source}: file too short for a checkpoint header"
        raise CheckpointFormatError(msg)
    (length,) = _LENGTH.unpack_from(data)
    start = _LENGTH.size + length
    if start > len(data):
        msg = f"{source}: header length {length} exceeds file size"
        raise CheckpointFormatError(msg)
    try:
        header = CheckpointHeader.model_validate(json.loads(data[_LENGTH.size : start].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as exc:
        msg = f"{source}: malformed checkpoint header"
        raise CheckpointFormatError(msg) from exc
    if header.version != CHECKPOINT_VERSION:
        msg = f"{source}: unsupported checkpoint version {header.version}"
        raise CheckpointFormatError(msg)

    payload = memoryview(data)[start:]
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header.manifest.items():
        count = int(np.prod(entry.shape)) if entry.shape else 1
        if entry.nbytes != count * _PAYLOAD_DTYPE.itemsize or entry.offset + entry.nbytes > len(payload):
            msg = f"{source}: tensor '{name}' does not fit the payload"
            raise CheckpointFormatError(msg)
        raw = np.frombuffer(payload[entry.offset : entry.offset + entry.nbytes], dtype=_PAYLOAD_DTYPE)
        tensors[name] = raw.reshape(entry.shape).astype(np.float32)
    return Checkpoint(model=header.model, train=header.train, step=header.step, tensors=tensors)


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info(f"saved checkpoint with {len(checkpoint.tensors)} tensors to {path}")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        msg = f"{path}: cannot read checkpoint ({exc.strerror})"
        raise CheckpointFormatError(msg) from exc
    return decode_checkpoint(data, str(path))
