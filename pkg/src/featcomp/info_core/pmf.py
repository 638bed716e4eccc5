"""Dense joint probability tables over finite-alphabet variables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CELL_CAP = 10_000_000
NORMALIZATION_TOL = 1e-12


class PMFError(ValueError):
    """Raised for malformed joint tables or selectors."""


@dataclass(frozen=True)
class VarSelector:
    """A set of variable positions within a :class:`JointPMF`.

    Order is irrelevant for information quantities; indices are stored sorted.
    """

    indices: tuple[int, ...]

    def __init__(self, indices: Iterable[int]):
        idx = tuple(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise PMFError(f"duplicate indices in selector {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    def __or__(self, other: "VarSelector") -> "VarSelector":
        return VarSelector(set(self.indices) | set(other.indices))

    def isdisjoint(self, other: "VarSelector") -> bool:
        return set(self.indices).isdisjoint(other.indices)


def sel(*indices) -> VarSelector:
    """Shorthand: ``sel(0, 2)`` or ``sel([0, 2])``."""
    if len(indices) == 1 and not isinstance(indices[0], (int, np.integer)):
        return VarSelector(indices[0])
    return VarSelector(indices)


def as_selector(s) -> VarSelector:
    if isinstance(s, VarSelector):
        return s
    if isinstance(s, (int, np.integer)):
        return VarSelector((s,))
    return VarSelector(s)


class JointPMF:
    """Immutable probability table indexed by a tuple of variable values.

    Parameters
    ----------
    variables : sequence of (name, alphabet size)
    table : array-like
        Either already shaped by the alphabet sizes or flat in row-major order.
    cell_cap : int
        Construction is refused above this many cells.
    """

    __slots__ = ("_variables", "_table")

    def __init__(self, variables: Sequence[tuple[str, int]], table, *, cell_cap: int = DEFAULT_CELL_CAP):
        variables = tuple((str(n), int(k)) for n, k in variables)
        if not variables:
            raise PMFError("a joint needs at least one variable")
        names = [n for n, _ in variables]
        if len(set(names)) != len(names):
            raise PMFError(f"duplicate variable names {names}")
        shape = tuple(k for _, k in variables)
        if any(k < 1 for k in shape):
            raise PMFError(f"alphabet sizes must be positive, got {shape}")
        cells = math.prod(shape)
        if cells > cell_cap:
            raise PMFError(f"joint has {cells} cells, above the cap of {cell_cap}")
        arr = np.array(table, dtype=np.float64)
        if arr.size != cells:
            raise PMFError(f"table has {arr.size} entries, expected {cells}")
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise PMFError("table contains non-finite entries")
        if np.any(arr < 0):
            raise PMFError("table contains negative entries")
        total = arr.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise PMFError(f"table sums to {total!r}, not 1")
        arr.setflags(write=False)
        self._variables = variables
        self._table = arr

    @classmethod
    def from_weights(cls, variables, weights, **kw) -> "JointPMF":
        """Normalize non-negative weights into a pmf."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise PMFError("weights must have a positive finite sum")
        return cls(variables, w / total, **kw)

    @property
    def variables(self) -> tuple[tuple[str, int], ...]:
        return self._variables

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self._variables)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._table.shape

    @property
    def table(self) -> np.ndarray:
        """Read-only view of the probability array."""
        return self._table

    @property
    def nvars(self) -> int:
        return len(self._variables)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def selector(self, *names: str) -> VarSelector:
        return VarSelector(self.index_of(n) for n in names)

    def check_selector(self, s: VarSelector, *, allow_empty: bool = True) -> VarSelector:
        s = as_selector(s)
        if not allow_empty and len(s) == 0:
            raise PMFError("selector must not be empty")
        for i in s:
            if not 0 <= i < self.nvars:
                raise PMFError(f"variable index {i} out of range for {self.nvars} variables")
        return s

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointPMF):
            return NotImplemented
        return self._variables == other._variables and np.array_equal(self._table, other._table)

    def __repr__(self) -> str:
        vs = ", ".join(f"{n}:{k}" for n, k in self._variables)
        return f"JointPMF({vs})"

    # -- text serialization -------------------------------------------------

    def dumps(self) -> str:
        lines = ["vars: " + ",".join(f"{n}:{k}" for n, k in self._variables)]
        flat = self._table.ravel()
        for cell in np.flatnonzero(flat):
            idx = np.unravel_index(cell, self.shape)
            lines.append(",".join(str(int(i)) for i in idx) + "\t" + repr(float(flat[cell])))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, **kw) -> "JointPMF":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows or not rows[0].startswith("vars:"):
            raise PMFError("missing 'vars:' header line")
        variables = []
        for item in rows[0][len("vars:"):].split(","):
            name, _, size = item.strip().rpartition(":")
            if not name or not size.isdigit():
                raise PMFError(f"bad variable declaration {item!r}")
            variables.append((name, int(size)))
        shape = tuple(k for _, k in variables)
        if math.prod(shape) > kw.get("cell_cap", DEFAULT_CELL_CAP):
            raise PMFError("declared joint exceeds the cell cap")
        table = np.zeros(shape)
        for ln in rows[1:]:
            try:
                idx_txt, prob_txt = ln.split("\t")
                idx = tuple(int(t) for t in idx_txt.split(","))
                prob = float(prob_txt)
            except ValueError as exc:
                raise PMFError(f"bad cell line {ln!r}") from exc
            if len(idx) != len(shape) or any(not 0 <= i < k for i, k in zip(idx, shape)):
                raise PMFError(f"cell index {idx} outside alphabet {shape}")
            table[idx] = prob
        return cls(variables, table, **kw)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path, **kw) -> "JointPMF":
        return cls.loads(Path(path).read_text(), **kw)
