"""Binary checkpoint container for model tensors and run metadata.

Layout (little-endian): ``b"HYPD"``, u32 version, u32 tensor count, then per
tensor u16 name length, UTF-8 name, u8 rank, u32 per dimension and a float64
row-major payload; everything after the last tensor is UTF-8 JSON metadata.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np
import torch

from ..errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"HYPD"
VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    """Named float64 tensors plus a JSON-serializable metadata dict."""

    tensors: Dict[str, torch.Tensor] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def section(self, prefix: str) -> Dict[str, torch.Tensor]:
        """Tensors under ``prefix.`` with the prefix stripped (a module state dict)."""
        head = prefix + "."
        return {k[len(head):]: v for k, v in self.tensors.items() if k.startswith(head)}

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if k not in self.metadata]
        if missing:
            raise CheckpointError(f"Checkpoint is missing metadata: {', '.join(missing)}")

    def add_section(self, prefix: str, state: Mapping[str, torch.Tensor]) -> None:
        for name, value in state.items():
            self.tensors[f"{prefix}.{name}"] = value.detach()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(ckpt.tensors))]
    for name, tensor in ckpt.tensors.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise CheckpointError(f"Tensor name too long: {name[:40]}...")
        array = np.asarray(tensor.detach().cpu().numpy(), dtype=PAYLOAD_DTYPE, order="C")
        if array.ndim > 0xFF:
            raise CheckpointError(f"Tensor {name} has too many dimensions")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes(order="C"))
    parts.append(json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError("Checkpoint is truncated")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic bytes)")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}, expected {VERSION}")

    tensors: Dict[str, torch.Tensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("Tensor name is not valid UTF-8") from e
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(size * PAYLOAD_DTYPE.itemsize)
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(shape)
        tensors[name] = torch.from_numpy(array.astype(np.float64))

    try:
        metadata = json.loads(data[reader.pos :].decode("utf-8")) if reader.pos < len(data) else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Checkpoint metadata is not valid JSON: {e}") from e
    if not isinstance(metadata, dict):
        raise CheckpointError("Checkpoint metadata must be a JSON object")
    return Checkpoint(tensors=tensors, metadata=metadata)


class CheckpointManager:
    """Reads and writes checkpoints under a fixed path."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def save(self, ckpt: Checkpoint) -> None:
        data = encode_checkpoint(ckpt)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(data)
        logger.info(f"💾 Saved checkpoint with {len(ckpt.tensors)} tensors to {self.path}")

    def load(self) -> Checkpoint:
        if not self.path.is_file():
            raise CheckpointError(f"Checkpoint not found: {self.path}")
        ckpt = decode_checkpoint(self.path.read_bytes())
        logger.info(f"Loaded checkpoint with {len(ckpt.tensors)} tensors from {self.path}")
        return ckpt


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    CheckpointManager(path).save(ckpt)


def load_checkpoint(path: str | Path, require: Optional[list[str]] = None) -> Checkpoint:
    ckpt = CheckpointManager(path).load()
    if require:
        ckpt.require(*require)
    return ckpt
