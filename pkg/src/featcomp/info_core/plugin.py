"""Plug-in (empirical frequency) joints from real-valued samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .pmf import JointPMF, PMFError

EQUAL_WIDTH = "equal-width"
EQUAL_FREQUENCY = "equal-frequency"


@dataclass(frozen=True)
class BinningSpec:
    """How each sample column is discretized.

    ``bins`` is either one count for every column or one per column.
    ``ranges`` optionally pins the (lo, hi) span of equal-width bins per
    column instead of using the observed min/max.
    """

    mode: str = EQUAL_WIDTH
    bins: int | Sequence[int] = 10
    ranges: Optional[Sequence[tuple[float, float]]] = None

    def __post_init__(self):
        if self.mode not in (EQUAL_WIDTH, EQUAL_FREQUENCY):
            raise PMFError(f"unknown binning mode {self.mode!r}")
        counts = [self.bins] if np.isscalar(self.bins) else list(self.bins)
        if any(int(b) < 1 for b in counts):
            raise PMFError("bins must be >= 1")

    def bins_for(self, ncols: int) -> list[int]:
        if np.isscalar(self.bins):
            return [int(self.bins)] * ncols
        if len(self.bins) != ncols:
            raise PMFError(f"{len(self.bins)} bin counts for {ncols} columns")
        return [int(b) for b in self.bins]


def _equal_width(col: np.ndarray, k: int, span) -> np.ndarray:
    lo, hi = span if span is not None else (col.min(), col.max())
    if hi <= lo:
        return np.zeros(col.shape, dtype=np.int64)
    codes = np.floor((col - lo) / (hi - lo) * k).astype(np.int64)
    return np.clip(codes, 0, k - 1)


def _equal_frequency(col: np.ndarray, k: int) -> np.ndarray:
    # rank-based so ties land in the same bin and the result is order-free
    rank = np.searchsorted(np.sort(col), col, side="left")
    return (rank * k // col.size).astype(np.int64)


def plugin_pmf_from_samples(samples, binning: BinningSpec, names: Optional[Sequence[str]] = None) -> JointPMF:
    """Normalized histogram of binned sample rows as a :class:`JointPMF`."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise PMFError("need at least one sample row")
    if not np.all(np.isfinite(x)):
        raise PMFError("samples contain non-finite values")
    n, d = x.shape
    bins = binning.bins_for(d)
    if binning.ranges is not None and len(binning.ranges) != d:
        raise PMFError("one range per column required")
    codes = np.empty((n, d), dtype=np.int64)
    for j in range(d):
        if binning.mode == EQUAL_WIDTH:
            span = None if binning.ranges is None else binning.ranges[j]
            codes[:, j] = _equal_width(x[:, j], bins[j], span)
        else:
            codes[:, j] = _equal_frequency(x[:, j], bins[j])
    flat = np.ravel_multi_index(codes.T, bins)
    counts = np.bincount(flat, minlength=int(np.prod(bins))).astype(np.float64)
    names = list(names) if names is not None else [f"x{j}" for j in range(d)]
    return JointPMF(list(zip(names, bins)), counts / n)
