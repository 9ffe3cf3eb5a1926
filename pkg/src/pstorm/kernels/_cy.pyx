# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels (see _np.py for reference semantics)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def soft_threshold(double[::1] z, double t):
    cdef Py_ssize_t n = z.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double a
    for i in range(n):
        a = fabs(z[i]) - t
        if a <= 0.0:
            o[i] = 0.0
        elif z[i] > 0.0:
            o[i] = a
        else:
            o[i] = -a
    return out


def project_nonneg_ball(double[::1] z):
    cdef Py_ssize_t n = z.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] p = out
    cdef Py_ssize_t i
    cdef double s = 0.0, den
    for i in range(n):
        p[i] = z[i] if z[i] > 0.0 else 0.0
        s += p[i] * p[i]
    # tolerance keeps the projection bit-exactly idempotent
    if s > 1.0 + 1e-14:
        den = sqrt(s)
        for i in range(n):
            p[i] /= den
    return out


cdef void _accum_neg_corr(double[:, ::1] batch, double[::1] x, double[::1] g) noexcept nogil:
    cdef Py_ssize_t m = batch.shape[0], n = batch.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, inv_m = 1.0 / m
    for j in range(n):
        g[j] = 0.0
    for i in range(m):
        c = 0.0
        for j in range(n):
            c += batch[i, j] * x[j]
        c *= inv_m
        for j in range(n):
            g[j] -= c * batch[i, j]


def neg_corr_grad(double[:, ::1] batch, double[::1] x):
    out = np.empty(batch.shape[1], dtype=np.float64)
    cdef double[::1] g = out
    _accum_neg_corr(batch, x, g)
    return out


def neg_corr_grad_pair(double[:, ::1] batch, double[::1] x_new, double[::1] x_old):
    out_v = np.empty(batch.shape[1], dtype=np.float64)
    out_u = np.empty(batch.shape[1], dtype=np.float64)
    cdef double[::1] v = out_v
    cdef double[::1] u = out_u
    _accum_neg_corr(batch, x_new, v)
    _accum_neg_corr(batch, x_old, u)
    return out_v, out_u


def momentum_update(double[::1] v, double[::1] u, double[::1] d, double beta):
    cdef Py_ssize_t n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double w = 1.0 - beta
    for i in range(n):
        o[i] = v[i] + w * (d[i] - u[i])
    return out


def normalize_rows_inplace(double[:, ::1] w):
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    cdef Py_ssize_t i, j
    cdef double s, den
    cdef int zero = 0
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += w[i, j] * w[i, j]
        if s == 0.0:
            zero += 1
            continue
        den = sqrt(s)
        for j in range(n):
            w[i, j] /= den
    return zero
