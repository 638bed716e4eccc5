"""Model checkpoints (``FCMG``).

Layout, little-endian::

    magic b"FCMG", u16 version, u16 len + utf-8 topology, u32 block count
    per block: u16 len + utf-8 name, u8 ndim, u32 dims..., f32 payload
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ModelGraph

MAGIC = b"FCMG"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    topology: str
    params: dict  # name -> float32 array


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dumps_checkpoint(model: ModelGraph) -> bytes:
    params = model.parameters()
    out = [MAGIC, struct.pack("<H", VERSION), _text(model.topology), struct.pack("<I", len(params))]
    for name, p in params.items():
        out.append(_text(name))
        out.append(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
        out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("checkpoint truncated")
        chunk = self.raw[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def loads_checkpoint(raw: bytes) -> Checkpoint:
    if len(raw) < 4 + 2 + 4:
        raise CheckpointError("checkpoint truncated")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != crc:
        raise CheckpointError("checksum mismatch")
    r = _Reader(raw[:-4])
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    topology = r.text()
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        name = r.text()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.raw):
        raise CheckpointError("trailing bytes after last block")
    return Checkpoint(topology, params)


def save_checkpoint(model: ModelGraph, path) -> None:
    Path(path).write_bytes(dumps_checkpoint(model))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())


def restore(model: ModelGraph, ckpt: Checkpoint) -> ModelGraph:
    """Copy checkpoint values into a model built with the same architecture."""
    if ckpt.topology != model.topology:
        raise CheckpointError(f"topology {ckpt.topology!r} does not match model {model.topology!r}")
    params = model.parameters()
    if set(params) != set(ckpt.params):
        raise CheckpointError("parameter names differ from the model")
    for name, p in params.items():
        if p.shape != ckpt.params[name].shape:
            raise CheckpointError(f"{name}: shape {ckpt.params[name].shape} vs {p.shape}")
        p[...] = ckpt.params[name]
    return model
