# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels.

Every reduction runs in the fixed accumulation order stated in
numpy_backend, so the two backends return bit-identical outputs for
identical inputs (the extension is compiled with -ffp-contract=off to keep
multiply-add rounding unfused). Inputs are C-contiguous float64 arrays.
"""

import numpy as np

from libc.math cimport sqrt

NAME = "cython"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double aip
    with nogil:
        for i in range(n):
            for p in range(k):
                aip = a[i, p]
                for j in range(m):
                    out[i, j] += aip * b[p, j]
    return out_arr


def matmul_nt(double[:, ::1] a, double[:, ::1] b):
    """a @ b.T"""
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for p in range(k):
                    acc += a[i, p] * b[j, p]
                out[i, j] = acc
    return out_arr


def matmul_tn(double[:, ::1] a, double[:, ::1] b):
    """a.T @ b"""
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    out_arr = np.zeros((k, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double aip
    with nogil:
        for i in range(n):
            for p in range(k):
                aip = a[i, p]
                for j in range(m):
                    out[p, j] += aip * b[i, j]
    return out_arr


def affine(double[:, ::1] x, double[:, ::1] w, double[::1] bias):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], m = w.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double xip
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = bias[j]
            for p in range(k):
                xip = x[i, p]
                for j in range(m):
                    out[i, j] += xip * w[p, j]
    return out_arr


def col_sum(double[:, ::1] a):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    out_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[j] += a[i, j]
    return out_arr


def row_sum(double[:, ::1] a):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i] += a[i, j]
    return out_arr


def relu_fwd(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_bwd(double[:, ::1] x, double[:, ::1] g):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double corr1, double corr2):
    """One in-place moment update and parameter step on flat views."""
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double mi, vi
    with nogil:
        for i in range(n):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / corr1) / (sqrt(vi / corr2) + eps)
