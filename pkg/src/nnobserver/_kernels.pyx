# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: dense layer evaluation, coupled interval recursion
and the simplex pivot. Mirrors ``_kernels_py`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp

cnp.import_array()

cdef enum:
    PURELIN = 0
    RELU = 1
    TANH = 2
    SIGMOID = 3


cdef inline double _act(int code, double z) noexcept nogil:
    if code == TANH:
        return tanh(z)
    if code == RELU:
        return z if z > 0.0 else 0.0
    if code == SIGMOID:
        return 1.0 / (1.0 + exp(-z))
    return z


def forward(list layers, const double[::1] x):
    cdef const double[:, ::1] w
    cdef const double[::1] b
    cdef double[::1] cur = np.array(x, dtype=np.float64)
    cdef double[::1] out
    cdef Py_ssize_t i, j, n_out, n_in
    cdef double acc
    cdef int code
    for layer in layers:
        w = layer[0]
        b = layer[3]
        code = layer[4]
        n_out = w.shape[0]
        n_in = w.shape[1]
        out = np.empty(n_out, dtype=np.float64)
        with nogil:
            for i in range(n_out):
                acc = 0.0
                for j in range(n_in):
                    acc = acc + w[i, j] * cur[j]
                out[i] = _act(code, acc + b[i])
        cur = out
    return np.asarray(cur)


def interval_forward(list layers, const double[::1] lo, const double[::1] hi):
    # lower pre = W lo + W_neg (hi - lo); upper pre = W lo + W_pos (hi - lo)
    cdef const double[:, ::1] w
    cdef const double[:, ::1] wn
    cdef const double[:, ::1] wp
    cdef const double[::1] b
    cdef double[::1] cl = np.array(lo, dtype=np.float64)
    cdef double[::1] cu = np.array(hi, dtype=np.float64)
    cdef double[::1] ol
    cdef double[::1] ou
    cdef Py_ssize_t i, j, n_out, n_in
    cdef double base, dl, du, d
    cdef int code
    for layer in layers:
        w = layer[0]
        wn = layer[1]
        wp = layer[2]
        b = layer[3]
        code = layer[4]
        n_out = w.shape[0]
        n_in = w.shape[1]
        ol = np.empty(n_out, dtype=np.float64)
        ou = np.empty(n_out, dtype=np.float64)
        with nogil:
            for i in range(n_out):
                base = 0.0
                dl = 0.0
                du = 0.0
                for j in range(n_in):
                    base = base + w[i, j] * cl[j]
                    d = cu[j] - cl[j]
                    dl = dl + wn[i, j] * d
                    du = du + wp[i, j] * d
                ol[i] = _act(code, (base + dl) + b[i])
                ou[i] = _act(code, (base + du) + b[i])
        cl = ol
        cu = ou
    return np.asarray(cl), np.asarray(cu)


def pivot(double[:, ::1] t, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t i, j, m = t.shape[0], n = t.shape[1]
    cdef double p = t[r, c]
    cdef double f
    with nogil:
        for j in range(n):
            t[r, j] = t[r, j] / p
        t[r, c] = 1.0
        for i in range(m):
            if i == r:
                continue
            f = t[i, c]
            if f == 0.0:
                continue
            for j in range(n):
                t[i, j] = t[i, j] - f * t[r, j]
            t[i, c] = 0.0
