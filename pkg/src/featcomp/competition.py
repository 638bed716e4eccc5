"""Analytic model of the two-digit corruption task.

The left image is either a clean digit (which reveals its label) or noise
(which reveals only that it is noise). The right label copies the left one
with probability ``rho_r`` and is otherwise an independent uniform draw.
Under that abstraction the signal available for learning right-digit
features while training on the left label is ``I(Y_l; Y_r | X_l)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .info_core import JointPMF, conditional_mutual_information, sel

# variable order inside build_task_joint
C, X_L, Y_L, Y_R = 0, 1, 2, 3


@dataclass(frozen=True)
class CorruptionParams:
    rho_l: float
    rho_r: float
    num_classes: int = 10

    def __post_init__(self):
        for name in ("rho_l", "rho_r"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be a probability in [0, 1], got {v!r}")
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ValueError(f"num_classes must be an integer >= 2, got {self.num_classes!r}")


def label_coupling(rho_r: float, num_classes: int) -> np.ndarray:
    """P(Y_r | Y_l) as a (C, C) row-stochastic matrix."""
    c = num_classes
    return rho_r * np.eye(c) + (1.0 - rho_r) / c


def build_task_joint(params: CorruptionParams) -> JointPMF:
    """Joint over (c, x_l, y_l, y_r).

    ``c`` is 1 when the left digit is kept clean; ``x_l`` is what the left
    image reveals about its label: ``y_l`` if clean, the constant 0 if not.
    """
    c = params.num_classes
    t = np.zeros((2, c, c, c))
    coupling = label_coupling(params.rho_r, c)
    for y in range(c):
        t[1, y, y, :] += params.rho_l / c * coupling[y]
        t[0, 0, y, :] += (1.0 - params.rho_l) / c * coupling[y]
    return JointPMF([("c", 2), ("x_l", c), ("y_l", c), ("y_r", c)], t)


def task_signal(params: CorruptionParams) -> float:
    """I(Y_l; X_r | X_l) in bits, computed on the exact joint."""
    return conditional_mutual_information(build_task_joint(params), sel(Y_L), sel(Y_R), sel(C, X_L))


def label_mutual_information(rho_r: float, num_classes: int) -> float:
    """Closed form I(Y_l; Y_r) = log2 C - H(coupled row)."""
    c = num_classes
    hit = rho_r + (1.0 - rho_r) / c
    miss = (1.0 - rho_r) / c
    h_row = -hit * math.log2(hit)
    if miss > 0:
        h_row -= (c - 1) * miss * math.log2(miss)
    return max(math.log2(c) - h_row, 0.0)


def closed_form_signal(params: CorruptionParams) -> float:
    return (1.0 - params.rho_l) * label_mutual_information(params.rho_r, params.num_classes)


@dataclass(frozen=True)
class SignalSurface:
    rho_l_grid: tuple[float, ...]
    rho_r_grid: tuple[float, ...]
    values: np.ndarray  # rows follow rho_l, columns rho_r
    num_classes: int = 10

    def to_csv(self) -> str:
        head = "rho_l\\rho_r," + ",".join(repr(float(r)) for r in self.rho_r_grid)
        lines = [head]
        for rl, row in zip(self.rho_l_grid, self.values):
            lines.append(repr(float(rl)) + "," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _check_grid(grid: Sequence[float], name: str) -> tuple[float, ...]:
    g = tuple(float(v) for v in grid)
    if not g:
        raise ValueError(f"{name} is empty")
    if any(not 0.0 <= v <= 1.0 for v in g):
        raise ValueError(f"{name} has values outside [0, 1]")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ValueError(f"{name} must be strictly ascending")
    return g


def signal_surface(rho_l_grid, rho_r_grid, num_classes: int = 10) -> SignalSurface:
    gl = _check_grid(rho_l_grid, "rho_l_grid")
    gr = _check_grid(rho_r_grid, "rho_r_grid")
    values = np.array(
        [[task_signal(CorruptionParams(rl, rr, num_classes)) for rr in gr] for rl in gl]
    )
    return SignalSurface(gl, gr, values, num_classes)


def min_signal_bound(h_y: float, k: int) -> float:
    """Ceiling on the smallest of ``k`` feature signals given label entropy ``h_y``."""
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    if h_y < 0:
        raise ValueError("label entropy must be non-negative")
    return h_y / k
