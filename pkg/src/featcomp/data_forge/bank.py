"""Digit image banks: MNIST IDX files or procedurally drawn glyphs."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
TRAIN_FRACTION = 0.8
MIN_SPLIT_POOL = 5


class BankError(ValueError):
    pass


@dataclass(frozen=True)
class DigitBank:
    """Grayscale images in [0, 1] grouped by class, plus per-pixel statistics."""

    images: np.ndarray  # (N, H, W) float32
    labels: np.ndarray  # (N,) int64
    num_classes: int
    mean: np.ndarray = field(init=False, repr=False)
    var: np.ndarray = field(init=False, repr=False)
    _pools: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        imgs = np.ascontiguousarray(self.images, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if imgs.ndim != 3 or imgs.shape[0] == 0:
            raise BankError("images must be a non-empty (N, H, W) array")
        if labels.shape != (imgs.shape[0],):
            raise BankError("one label per image required")
        if not np.all(np.isfinite(imgs)) or imgs.min() < 0 or imgs.max() > 1:
            raise BankError("pixel values must lie in [0, 1]")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise BankError(f"labels must lie in [0, {self.num_classes})")
        pools = tuple(np.flatnonzero(labels == c) for c in range(self.num_classes))
        empty = [c for c, p in enumerate(pools) if p.size == 0]
        if empty:
            raise BankError(f"classes without images: {empty}")
        imgs.setflags(write=False)
        labels.setflags(write=False)
        flat = imgs.reshape(imgs.shape[0], -1).astype(np.float64)
        mean = flat.mean(axis=0).reshape(imgs.shape[1:])
        var = flat.var(axis=0).reshape(imgs.shape[1:])
        for name, value in (("images", imgs), ("labels", labels), ("mean", mean), ("var", var), ("_pools", pools)):
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def __len__(self) -> int:
        return self.images.shape[0]

    def pool(self, cls: int, split: str = "train") -> np.ndarray:
        """Image indices of ``cls`` usable for ``split``.

        Classes with at least five images are cut 80/20 so the train and test
        splits never share a source image; smaller classes are shared.
        """
        idx = self._pools[cls]
        if idx.size < MIN_SPLIT_POOL:
            return idx
        cut = math.ceil(idx.size * TRAIN_FRACTION)
        if split == "train":
            return idx[:cut]
        if split == "test":
            return idx[cut:]
        raise BankError(f"unknown split {split!r}")


# -- IDX ------------------------------------------------------------------

def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise BankError(f"{path}: truncated header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise BankError(f"{path}: bad magic {got}, expected {magic}")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    need = math.prod(dims)
    if len(raw) - head < need:
        raise BankError(f"{path}: truncated payload ({len(raw) - head} of {need} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=head).reshape(dims)


def downsample(images: np.ndarray, size: int) -> np.ndarray:
    """Block-average square images down to ``size`` x ``size``."""
    n, h, w = images.shape
    if h == size and w == size:
        return images
    if h % size or w % size:
        raise BankError(f"cannot block-average {h}x{w} down to {size}x{size}")
    fh, fw = h // size, w // size
    return images.reshape(n, size, fh, size, fw).mean(axis=(2, 4))


def load_idx(images_path, labels_path, num_classes: int = 10, image_size: Optional[int] = 14) -> DigitBank:
    """Read an IDX3 image file and its IDX1 label file.

    ``image_size=None`` keeps the native resolution; otherwise images are
    block-averaged (28x28 MNIST becomes 14x14 by default).
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise BankError(f"count mismatch: {images.shape[0]} images, {labels.shape[0]} labels")
    if labels.size and labels.max() >= num_classes:
        raise BankError(f"label {int(labels.max())} out of range for {num_classes} classes")
    pixels = images.astype(np.float32) / 255.0
    if image_size is not None:
        pixels = downsample(pixels, image_size)
    return DigitBank(pixels.astype(np.float32), labels.astype(np.int64), num_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images/labels in IDX format (used for fixtures and export)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# -- procedural glyphs ------------------------------------------------------

# segment endpoints in a unit box, y growing downwards
_SEGMENTS = {
    "a": ((0.2, 0.1), (0.8, 0.1)),
    "b": ((0.8, 0.1), (0.8, 0.5)),
    "c": ((0.8, 0.5), (0.8, 0.9)),
    "d": ((0.2, 0.9), (0.8, 0.9)),
    "e": ((0.2, 0.5), (0.2, 0.9)),
    "f": ((0.2, 0.1), (0.2, 0.5)),
    "g": ((0.2, 0.5), (0.8, 0.5)),
    "h": ((0.2, 0.1), (0.8, 0.9)),
    "i": ((0.8, 0.1), (0.2, 0.9)),
    "j": ((0.5, 0.1), (0.5, 0.9)),
}

# digit-like glyphs first, further classes from spare segment patterns
_GLYPHS = [
    "abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afedcg", "abc", "abcdefg", "abfgcd",
    "hi", "ajd", "fgh", "adi", "bgej", "ahd",
]
MAX_SYNTH_CLASSES = len(_GLYPHS)


def _segment_distance(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    t = ((px - x0) * dx + (py - y0) * dy) / np.maximum(dx * dx + dy * dy, 1e-12)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def render_glyph(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one jittered instance of glyph ``cls``."""
    angle = rng.normal(0.0, 0.12)
    scale = rng.uniform(0.75, 1.05, size=2)
    shear = rng.normal(0.0, 0.1)
    shift = rng.uniform(-0.12, 0.12, size=2)
    width = rng.uniform(0.05, 0.09)
    ca, sa = math.cos(angle), math.sin(angle)
    grid = (np.arange(size) + 0.5) / size
    gy, gx = np.meshgrid(grid, grid, indexing="ij")
    # map pixel centres back into glyph space (inverse of rotate/shear/scale/shift)
    ux, uy = gx - 0.5 - shift[0], gy - 0.5 - shift[1]
    rx, ry = ca * ux + sa * uy, -sa * ux + ca * uy
    rx = rx - shear * ry
    px, py = rx / scale[0] + 0.5, ry / scale[1] + 0.5
    dist = np.full((size, size), np.inf)
    for seg in _GLYPHS[cls]:
        if rng.random() < 0.08:
            continue  # occasionally drop a stroke
        (x0, y0), (x1, y1) = _SEGMENTS[seg]
        jit = rng.normal(0.0, 0.03, size=4)
        dist = np.minimum(dist, _segment_distance(px, py, x0 + jit[0], y0 + jit[1], x1 + jit[2], y1 + jit[3]))
    img = np.exp(-0.5 * (dist / width) ** 2) * rng.uniform(0.7, 1.0)
    img += rng.normal(0.0, 0.05, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_bank(num_classes: int = 10, per_class: int = 500, image_size: int = 14, seed: int = 0) -> DigitBank:
    """Seeded bank of class-distinguishable stroke glyphs (a stand-in for MNIST)."""
    if not 2 <= num_classes <= MAX_SYNTH_CLASSES:
        raise BankError(f"num_classes must be in [2, {MAX_SYNTH_CLASSES}]")
    if per_class < 1 or image_size < 4:
        raise BankError("per_class must be >= 1 and image_size >= 4")
    rng = np.random.default_rng(seed)
    images = np.empty((num_classes * per_class, image_size, image_size), dtype=np.float32)
    labels = np.repeat(np.arange(num_classes), per_class)
    for i, c in enumerate(labels):
        images[i] = render_glyph(int(c), image_size, rng)
    return DigitBank(images, labels, num_classes)
