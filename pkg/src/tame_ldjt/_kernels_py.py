"""Flat-table kernels, numpy implementation.

Every potential table is a 1-D float64 array in mixed-radix (row-major)
order.  ``shape`` holds the range size of each axis.  Strides passed to
:func:`product` are element strides of an operand expressed in the axes of
the result; an axis the operand lacks has stride 0.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND = "python"


def product(a, b, shape, strides_a, strides_b):
    shape = tuple(int(s) for s in shape)
    isz = a.itemsize
    va = as_strided(a, shape, tuple(int(s) * isz for s in strides_a), writeable=False)
    vb = as_strided(b, shape, tuple(int(s) * isz for s in strides_b), writeable=False)
    return np.multiply(va, vb).ravel()


def sum_out(a, shape, axis):
    shape = tuple(int(s) for s in shape)
    outer = int(np.prod(shape[:axis], dtype=np.int64))
    inner = int(np.prod(shape[axis + 1:], dtype=np.int64))
    return a.reshape(outer, shape[axis], inner).sum(axis=1).ravel()


def take(a, shape, axis, index):
    shape = tuple(int(s) for s in shape)
    outer = int(np.prod(shape[:axis], dtype=np.int64))
    inner = int(np.prod(shape[axis + 1:], dtype=np.int64))
    return np.ascontiguousarray(a.reshape(outer, shape[axis], inner)[:, index, :]).ravel()


def rsim(a, b):
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0.0:
        raise ZeroDivisionError("rsim undefined for a zero vector")
    d = 1.0 - float(np.dot(a, b)) / den
    return min(max(d, 0.0), 1.0)


def rsim_matrix(v):
    sq = np.einsum("ij,ij->i", v, v)
    if np.any(sq == 0.0):
        raise ZeroDivisionError("rsim undefined for a zero vector")
    d = 1.0 - (v @ v.T) / np.sqrt(np.outer(sq, sq))
    np.clip(d, 0.0, 1.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def weighted_mean(v, w):
    return (w @ v) / w.sum()
