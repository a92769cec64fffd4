"""The DDCK checkpoint container.

Layout (all integers little-endian)::

    b"DDCK" | u32 version=1 | u8 stage (0 lr, 1 hr) | u32 count
    count x ( u16 name_len | name utf-8 | u8 rank | rank x u32 dim | f32 payload )
    u64 seed_state
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DDCK"
VERSION = 1
STAGES = ("lr", "hr")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    stage: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    seed_state: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CheckpointError(f"stage must be one of {STAGES}, got {self.stage!r}")

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix/`` with the prefix stripped."""
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}

    def same_as(self, other: "Checkpoint") -> bool:
        return encode(self) == encode(other)


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<IBI", VERSION, STAGES.index(ckpt.stage), len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        a = np.asarray(arr, dtype="<f4")
        if a.ndim > 255:
            raise CheckpointError(f"tensor {name!r} has rank {a.ndim} > 255")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim)
                     + struct.pack(f"<{a.ndim}I", *a.shape) + a.tobytes(order="C"))
    parts.append(struct.pack("<Q", ckpt.seed_state & 0xFFFFFFFFFFFFFFFF))
    return b"".join(parts)


def decode(buf: bytes, source: str = "<bytes>") -> Checkpoint:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{source}: truncated while reading {what} at byte offset {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    magic = take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r} at byte offset 0")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported version {version} at byte offset 4")
    (stage_tag,) = struct.unpack("<B", take(1, "stage tag"))
    if stage_tag >= len(STAGES):
        raise CheckpointError(f"{source}: bad stage tag {stage_tag} at byte offset 8")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name_at = pos
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{source}: tensor name is not UTF-8 at byte offset {name_at}") from None
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        n = math.prod(dims)
        payload = take(4 * n, f"payload of {name!r}")
        if name in tensors:
            raise CheckpointError(f"{source}: duplicate tensor {name!r} at byte offset {name_at}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    (seed_state,) = struct.unpack("<Q", take(8, "seed state"))
    if pos != len(buf):
        raise CheckpointError(f"{source}: {len(buf) - pos} trailing bytes at byte offset {pos}")
    return Checkpoint(STAGES[stage_tag], tensors, seed_state)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(encode(ckpt))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    return decode(path.read_bytes(), str(path))
