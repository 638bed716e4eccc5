"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

ZERO_PROB = 1e-15


def marginal_table(flat, shape, keep):
    table = np.asarray(flat, dtype=np.float64).reshape(tuple(shape))
    drop = tuple(a for a, k in enumerate(keep) if not k)
    m = table.sum(axis=drop) if drop else table
    return np.ascontiguousarray(m).ravel()


def marginal_entropy(flat, shape, keep):
    m = marginal_table(flat, shape, keep)
    p = m[m > ZERO_PROB]
    return float(-(p * np.log2(p)).sum())
