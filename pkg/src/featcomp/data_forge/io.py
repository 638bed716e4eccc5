"""Binary dataset files (``FCLD``) and their CSV manifests.

Layout, little-endian::

    magic  b"FCLD"
    u16    version
    f64    rho_l, f64 rho_r, u32 num_classes
    u64    seed
    u8     split (0 train, 1 test)
    u32    height, u32 width
    u64    count
    count x { f32[h*w] x_l, f32[h*w] x_r, u16 y_l, u16 y_r, u8 corrupted_left }
    u32    CRC32 of every preceding byte
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from ..competition import CorruptionParams
from .dataset import SPLITS, Dataset

MAGIC = b"FCLD"
VERSION = 1
_HEADER = struct.Struct("<4sHddIQBIIQ")
_CRC = struct.Struct("<I")


class DatasetFormatError(ValueError):
    pass


def _record_dtype(pixels: int) -> np.dtype:
    return np.dtype(
        [("x_l", "<f4", (pixels,)), ("x_r", "<f4", (pixels,)), ("y_l", "<u2"), ("y_r", "<u2"), ("corrupted", "u1")]
    )


def dumps_dataset(d: Dataset) -> bytes:
    h, w = d.image_shape
    n = len(d)
    header = _HEADER.pack(
        MAGIC, VERSION, d.params.rho_l, d.params.rho_r, d.params.num_classes,
        d.seed, SPLITS.index(d.split), h, w, n,
    )
    rec = np.zeros(n, dtype=_record_dtype(h * w))
    rec["x_l"] = d.x_l.reshape(n, -1)
    rec["x_r"] = d.x_r.reshape(n, -1)
    rec["y_l"] = d.y_l
    rec["y_r"] = d.y_r
    rec["corrupted"] = d.corrupted_left
    body = header + rec.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def loads_dataset(raw: bytes) -> Dataset:
    if len(raw) < _HEADER.size + _CRC.size:
        raise DatasetFormatError("file truncated before end of header")
    magic, version, rho_l, rho_r, classes, seed, split, h, w, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version} (expected {VERSION})")
    dtype = _record_dtype(h * w)
    expect = _HEADER.size + n * dtype.itemsize + _CRC.size
    if len(raw) != expect:
        raise DatasetFormatError(f"file is {len(raw)} bytes, header implies {expect}")
    (crc,) = _CRC.unpack_from(raw, len(raw) - _CRC.size)
    if zlib.crc32(raw[: -_CRC.size]) != crc:
        raise DatasetFormatError("checksum mismatch")
    if split >= len(SPLITS):
        raise DatasetFormatError(f"bad split code {split}")
    rec = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
    arrays = (
        rec["x_l"].reshape(n, h, w).astype(np.float32),
        rec["x_r"].reshape(n, h, w).astype(np.float32),
        rec["y_l"].astype(np.int64),
        rec["y_r"].astype(np.int64),
        rec["corrupted"].astype(bool),
    )
    for a in arrays:
        a.setflags(write=False)
    return Dataset(*arrays, CorruptionParams(rho_l, rho_r, classes), int(seed), SPLITS[split])


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(d: Dataset, path) -> None:
    if not str(path):
        raise FileNotFoundError("empty dataset path")
    _atomic_write(Path(path), dumps_dataset(d))


def load_dataset(path) -> Dataset:
    if not str(path):
        raise FileNotFoundError("empty dataset path")
    return loads_dataset(Path(path).read_bytes())


def manifest_csv(d: Dataset) -> str:
    lines = ["index,y_l,y_r,corrupted_left"]
    for i in range(len(d)):
        lines.append(f"{i},{int(d.y_l[i])},{int(d.y_r[i])},{int(bool(d.corrupted_left[i]))}")
    return "\n".join(lines) + "\n"


def write_manifest(d: Dataset, path) -> None:
    Path(path).write_text(manifest_csv(d))
