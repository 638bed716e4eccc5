# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled marginalization / entropy loops for small dense joints."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log2

cnp.import_array()

cdef double ZERO_PROB = 1e-15


cdef void _marginalize(const double[::1] flat, const Py_ssize_t[::1] shape,
                       const unsigned char[::1] keep, double[::1] out) noexcept nogil:
    cdef Py_ssize_t nd = 0
    cdef Py_ssize_t a, c, i, pos = 0, s = 1, base, inner, nouter
    cdef Py_ssize_t dim[32]
    cdef unsigned char kp[32]
    cdef Py_ssize_t ostride[32]
    cdef Py_ssize_t counter[32]
    cdef double acc
    # merge neighbouring axes that are both kept or both summed out
    for a in range(shape.shape[0]):
        if shape[a] == 1:
            continue
        if nd > 0 and kp[nd - 1] == (keep[a] != 0):
            dim[nd - 1] *= shape[a]
        else:
            dim[nd] = shape[a]
            kp[nd] = keep[a] != 0
            nd += 1
    for c in range(out.shape[0]):
        out[c] = 0.0
    if nd == 0:
        out[0] = flat[0]
        return
    for a in range(nd - 1, -1, -1):
        counter[a] = 0
        if kp[a]:
            ostride[a] = s
            s *= dim[a]
        else:
            ostride[a] = 0
    inner = dim[nd - 1]
    nouter = flat.shape[0] // inner
    base = 0
    for c in range(nouter):
        if kp[nd - 1]:
            for i in range(inner):
                out[pos + i] += flat[base + i]
        else:
            acc = 0.0
            for i in range(inner):
                acc += flat[base + i]
            out[pos] += acc
        base += inner
        # odometer over the outer axes, carrying leftwards
        a = nd - 2
        while a >= 0:
            counter[a] += 1
            pos += ostride[a]
            if counter[a] < dim[a]:
                break
            pos -= ostride[a] * dim[a]
            counter[a] = 0
            a -= 1


def marginal_table(const double[::1] flat, shape, keep):
    """Marginal over the axes flagged in ``keep``, flattened row-major."""
    cdef Py_ssize_t nd = len(shape)
    if nd > 32:
        raise ValueError("at most 32 variables supported")
    shp = np.asarray(shape, dtype=np.intp)
    kp = np.asarray(keep, dtype=np.uint8)
    cdef Py_ssize_t size = 1
    for a in range(nd):
        if kp[a]:
            size *= shp[a]
    out = np.empty(size, dtype=np.float64)
    _marginalize(flat, shp, kp, out)
    return out


def marginal_entropy(const double[::1] flat, shape, keep):
    """Entropy in bits of the marginal over the axes flagged in ``keep``."""
    cdef double[::1] m = marginal_table(flat, shape, keep)
    cdef double h = 0.0, p
    cdef Py_ssize_t i
    for i in range(m.shape[0]):
        p = m[i]
        if p > ZERO_PROB:
            h -= p * log2(p)
    return h
