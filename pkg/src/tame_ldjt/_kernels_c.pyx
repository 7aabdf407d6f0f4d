# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Flat-table kernels, compiled.  Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


def product(const double[::1] a, const double[::1] b, shape, strides_a, strides_b):
    cdef Py_ssize_t nd = len(shape)
    cdef Py_ssize_t[32] sh, sa, sb, ctr
    cdef Py_ssize_t i, k, n = 1, oa = 0, ob = 0
    if nd > 32:
        raise ValueError("too many axes")
    for k in range(nd):
        sh[k] = shape[k]
        sa[k] = strides_a[k]
        sb[k] = strides_b[k]
        ctr[k] = 0
        n *= sh[k]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = a[oa] * b[ob]
        # mixed-radix increment, last axis fastest
        k = nd - 1
        while k >= 0:
            ctr[k] += 1
            oa += sa[k]
            ob += sb[k]
            if ctr[k] < sh[k]:
                break
            oa -= sa[k] * sh[k]
            ob -= sb[k] * sh[k]
            ctr[k] = 0
            k -= 1
    return out


cdef inline void _split(shape, Py_ssize_t axis, Py_ssize_t* outer, Py_ssize_t* n,
                        Py_ssize_t* inner) except *:
    cdef Py_ssize_t k
    outer[0] = 1
    inner[0] = 1
    for k in range(axis):
        outer[0] *= <Py_ssize_t>shape[k]
    for k in range(axis + 1, len(shape)):
        inner[0] *= <Py_ssize_t>shape[k]
    n[0] = shape[axis]


def sum_out(const double[::1] a, shape, Py_ssize_t axis):
    cdef Py_ssize_t outer, n, inner, i, j, r
    cdef double acc
    _split(shape, axis, &outer, &n, &inner)
    out = np.empty(outer * inner, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(outer):
        for r in range(inner):
            acc = 0.0
            for j in range(n):
                acc += a[(i * n + j) * inner + r]
            o[i * inner + r] = acc
    return out


def take(const double[::1] a, shape, Py_ssize_t axis, Py_ssize_t index):
    cdef Py_ssize_t outer, n, inner, i, r
    _split(shape, axis, &outer, &n, &inner)
    out = np.empty(outer * inner, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(outer):
        for r in range(inner):
            o[i * inner + r] = a[(i * n + index) * inner + r]
    return out


def rsim(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t i
    cdef double ab = 0.0, aa = 0.0, bb = 0.0, d
    for i in range(a.shape[0]):
        ab += a[i] * b[i]
        aa += a[i] * a[i]
        bb += b[i] * b[i]
    if aa == 0.0 or bb == 0.0:
        raise ZeroDivisionError("rsim undefined for a zero vector")
    d = 1.0 - ab / sqrt(aa * bb)
    if d < 0.0:
        return 0.0
    if d > 1.0:
        return 1.0
    return d


def rsim_matrix(const double[:, ::1] v):
    cdef Py_ssize_t m = v.shape[0], n = v.shape[1], i, j, k
    cdef double s, d
    norms = np.empty(m, dtype=np.float64)
    cdef double[::1] nr = norms
    for i in range(m):
        s = 0.0
        for k in range(n):
            s += v[i, k] * v[i, k]
        if s == 0.0:
            raise ZeroDivisionError("rsim undefined for a zero vector")
        nr[i] = s
    out = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        for j in range(i + 1, m):
            s = 0.0
            for k in range(n):
                s += v[i, k] * v[j, k]
            d = 1.0 - s / sqrt(nr[i] * nr[j])
            if d < 0.0:
                d = 0.0
            elif d > 1.0:
                d = 1.0
            o[i, j] = d
            o[j, i] = d
    return out


def weighted_mean(const double[:, ::1] v, const double[::1] w):
    cdef Py_ssize_t m = v.shape[0], n = v.shape[1], i, k
    cdef double tot = 0.0
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(m):
        tot += w[i]
        for k in range(n):
            o[k] += w[i] * v[i, k]
    for k in range(n):
        o[k] /= tot
    return out
