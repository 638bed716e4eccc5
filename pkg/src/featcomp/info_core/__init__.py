"""Exact discrete information theory over small joint tables."""

from ._backend import BACKEND
from .measures import (
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    marginalize,
    mutual_information,
    signal_sequence,
)
from .plugin import EQUAL_FREQUENCY, EQUAL_WIDTH, BinningSpec, plugin_pmf_from_samples
from .pmf import DEFAULT_CELL_CAP, JointPMF, PMFError, VarSelector, sel

__all__ = [
    "BACKEND",
    "BinningSpec",
    "DEFAULT_CELL_CAP",
    "EQUAL_FREQUENCY",
    "EQUAL_WIDTH",
    "JointPMF",
    "PMFError",
    "VarSelector",
    "conditional_entropy",
    "conditional_mutual_information",
    "entropy",
    "marginalize",
    "mutual_information",
    "plugin_pmf_from_samples",
    "sel",
    "signal_sequence",
]
