# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled data-movement kernels: im2col / col2im for 1-D convolution.

Same contracts as the numpy fallback in fallback.py; selected at import by
ndgait._kernels.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    cdef Py_ssize_t tp = x.shape[2]
    cdef Py_ssize_t to = (tp - k) // stride + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((n, c * k, to), dtype=dtype)
    cdef real[:, :, ::1] cols = out_arr
    cdef Py_ssize_t i, ch, j, t
    with nogil:
        for i in range(n):
            for ch in range(c):
                for j in range(k):
                    for t in range(to):
                        cols[i, ch * k + j, t] = x[i, ch, t * stride + j]
    return out_arr


def col2im(real[:, :, ::1] cols, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t tp):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t ck = cols.shape[1]
    cdef Py_ssize_t to = cols.shape[2]
    cdef Py_ssize_t c = ck // k
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c, tp), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, ch, j, t
    with nogil:
        for i in range(n):
            for ch in range(c):
                for j in range(k):
                    for t in range(to):
                        out[i, ch, t * stride + j] += cols[i, ch * k + j, t]
    return out_arr
