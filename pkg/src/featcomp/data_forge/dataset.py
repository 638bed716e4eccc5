"""Two-digit composite datasets with left-image corruption and label coupling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..competition import CorruptionParams
from .bank import DigitBank

SPLITS = ("train", "test")


@dataclass(frozen=True)
class Example:
    x_l: np.ndarray
    x_r: np.ndarray
    y_l: int
    y_r: int
    corrupted_left: bool


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-stored examples; iterate or index to get :class:`Example` rows."""

    x_l: np.ndarray  # (n, H, W) float32
    x_r: np.ndarray
    y_l: np.ndarray  # (n,) int64
    y_r: np.ndarray
    corrupted_left: np.ndarray  # (n,) bool
    params: CorruptionParams
    seed: int
    split: str = "train"

    def __post_init__(self):
        n = self.y_l.shape[0]
        if not (self.x_l.shape[0] == self.x_r.shape[0] == self.y_r.shape[0] == self.corrupted_left.shape[0] == n):
            raise ValueError("dataset columns have different lengths")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")

    def __len__(self) -> int:
        return int(self.y_l.shape[0])

    def __getitem__(self, i: int) -> Example:
        return Example(self.x_l[i], self.x_r[i], int(self.y_l[i]), int(self.y_r[i]), bool(self.corrupted_left[i]))

    def __iter__(self) -> Iterator[Example]:
        return (self[i] for i in range(len(self)))

    @property
    def examples(self) -> list[Example]:
        return list(self)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.x_l.shape[1], self.x_l.shape[2]

    def inputs(self) -> np.ndarray:
        """(n, 2*H*W) float64 rows: flattened left half then right half."""
        n = len(self)
        return np.concatenate([self.x_l.reshape(n, -1), self.x_r.reshape(n, -1)], axis=1).astype(np.float64)

    def labels(self, target: str) -> np.ndarray:
        if target not in ("y_l", "y_r"):
            raise ValueError("target must be 'y_l' or 'y_r'")
        return getattr(self, target)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.params == other.params
            and self.seed == other.seed
            and self.split == other.split
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("x_l", "x_r", "y_l", "y_r", "corrupted_left")
            )
        )


def factored_gaussian_noise(bank: DigitBank, n: int, rng: np.random.Generator, clamp: bool = True) -> np.ndarray:
    """Images with independent per-pixel N(mean, var) noise from the bank's statistics."""
    z = rng.standard_normal((n,) + bank.shape)
    noise = bank.mean + np.sqrt(bank.var) * z
    return np.clip(noise, 0.0, 1.0) if clamp else noise


def _draw(bank: DigitBank, labels: np.ndarray, u: np.ndarray, split: str) -> np.ndarray:
    out = np.empty((labels.shape[0],) + bank.shape, dtype=np.float32)
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        pool = bank.pool(int(c), split)
        if pool.size == 0:
            raise ValueError(f"class {c} has no images in the {split} split")
        pick = np.minimum((u[rows] * pool.size).astype(np.int64), pool.size - 1)
        out[rows] = bank.images[pool[pick]]
    return out


def gen_dataset(bank: DigitBank, params: CorruptionParams, n: int, seed: int, split: str = "train") -> Dataset:
    """Sample ``n`` two-digit examples.

    y_l is uniform; the left image is a class-y_l digit, replaced by clamped
    factored Gaussian noise with probability 1 - rho_l. y_r copies y_l with
    probability rho_r and is otherwise uniform; the right image is a fresh
    class-y_r digit and is never corrupted.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    if bank.num_classes < params.num_classes:
        raise ValueError(f"bank has {bank.num_classes} classes, params need {params.num_classes}")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    c = params.num_classes
    rng = np.random.default_rng(np.random.SeedSequence([seed, SPLITS.index(split)]))
    y_l = rng.integers(0, c, size=n)
    u_l = rng.random(n)
    corrupted = rng.random(n) >= params.rho_l
    noise = factored_gaussian_noise(bank, n, rng)
    copy = rng.random(n) < params.rho_r
    y_free = rng.integers(0, c, size=n)
    u_r = rng.random(n)

    y_r = np.where(copy, y_l, y_free)
    x_l = _draw(bank, y_l, u_l, split)
    x_l[corrupted] = noise[corrupted]
    x_r = _draw(bank, y_r, u_r, split)
    y_l, y_r = y_l.astype(np.int64), y_r.astype(np.int64)
    for a in (x_l, x_r, y_l, y_r, corrupted):
        a.setflags(write=False)
    return Dataset(x_l, x_r, y_l, y_r, corrupted, params, int(seed), split)
