"""Entropy, mutual information and the per-feature signal chain (all in bits)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ._backend import marginal_entropy, marginal_table
from .pmf import JointPMF, PMFError, VarSelector, as_selector

ZERO_SNAP = 1e-12


def _keep_mask(p: JointPMF, s: VarSelector) -> np.ndarray:
    mask = np.zeros(p.nvars, dtype=np.uint8)
    mask[list(s.indices)] = 1
    return mask


def _disjoint(*sels: VarSelector) -> None:
    seen: set[int] = set()
    for s in sels:
        if not seen.isdisjoint(s.indices):
            raise PMFError("selectors must be pairwise disjoint")
        seen.update(s.indices)


def _clamp(value: float, what: str) -> float:
    # rounding residue around zero is reported as an exact zero
    if value < -ZERO_SNAP:
        raise RuntimeError(f"{what} came out at {value!r}; numerical error beyond tolerance")
    return 0.0 if value <= ZERO_SNAP else value


def marginalize(p: JointPMF, keep) -> JointPMF:
    keep = p.check_selector(as_selector(keep), allow_empty=False)
    flat = marginal_table(p.table.ravel(), p.shape, _keep_mask(p, keep))
    variables = [p.variables[i] for i in keep]
    return JointPMF(variables, flat)


def _h(p: JointPMF, s: VarSelector) -> float:
    if len(s) == 0:
        return 0.0
    # a marginal cell can round to 1 + ulp, giving a -0.0-ish entropy
    return max(marginal_entropy(p.table.ravel(), p.shape, _keep_mask(p, s)), 0.0)


def entropy(p: JointPMF, vars) -> float:
    s = p.check_selector(as_selector(vars))
    return _h(p, s)


def conditional_entropy(p: JointPMF, target, given) -> float:
    t = p.check_selector(as_selector(target))
    g = p.check_selector(as_selector(given))
    _disjoint(t, g)
    return _clamp(_h(p, t | g) - _h(p, g), "conditional entropy")


def mutual_information(p: JointPMF, a, b) -> float:
    a = p.check_selector(as_selector(a))
    b = p.check_selector(as_selector(b))
    _disjoint(a, b)
    return _clamp(_h(p, a) + _h(p, b) - _h(p, a | b), "mutual information")


def conditional_mutual_information(p: JointPMF, a, b, given) -> float:
    a = p.check_selector(as_selector(a))
    b = p.check_selector(as_selector(b))
    g = p.check_selector(as_selector(given))
    _disjoint(a, b, g)
    value = _h(p, a | g) + _h(p, b | g) - _h(p, a | b | g) - _h(p, g)
    return _clamp(value, "conditional mutual information")


def signal_sequence(p: JointPMF, y, features: Sequence) -> list[float]:
    """Marginal information each feature adds about ``y`` given its predecessors.

    Element ``i`` is ``I(y; features[i] | features[0..i-1])``; the list sums to
    ``I(y; all features)``.
    """
    y = p.check_selector(as_selector(y))
    feats = [p.check_selector(as_selector(f)) for f in features]
    _disjoint(y, *feats)
    out = []
    prior = VarSelector(())
    for f in feats:
        out.append(conditional_mutual_information(p, y, f, prior))
        prior = prior | f
    return out
