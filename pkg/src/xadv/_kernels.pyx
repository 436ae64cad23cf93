# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the inner-loop kernels in ``_kernels_py``.

Every routine performs the same floating point operations in the same
order as its numpy twin, so both backends agree bitwise.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, fabs

cnp.import_array()

BACKEND = "cython"


def sign_step(double[::1] delta, const double[::1] grad, double alpha, double epsilon):
    cdef Py_ssize_t i, n = delta.shape[0]
    cdef double v, g, m = 0.0
    if grad.shape[0] != n:
        raise ValueError("gradient size does not match perturbation size")
    for i in range(n):
        g = grad[i]
        if g > 0:
            v = delta[i] + alpha
        elif g < 0:
            v = delta[i] - alpha
        else:
            v = delta[i] + alpha * 0.0
        if v < -epsilon:
            v = -epsilon
        if v > epsilon:
            v = epsilon
        delta[i] = v
        if fabs(v) > m:
            m = fabs(v)
    return m


def clip_linf(const double[::1] delta, double epsilon):
    cdef Py_ssize_t i, n = delta.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double v
    for i in range(n):
        v = delta[i]
        if not isfinite(v):
            raise FloatingPointError(f"non-finite perturbation element at flat index {i}")
        if v < -epsilon:
            v = -epsilon
        if v > epsilon:
            v = epsilon
        o[i] = v
    return out


def blur_separable(const double[:, :, ::1] img, const double[::1] kernel):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef Py_ssize_t k = kernel.shape[0], r = k // 2
    cdef Py_ssize_t y, x, ch, j, src
    cdef double acc
    tmp_arr = np.empty((h, w, c), dtype=np.float64)
    out_arr = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] tmp = tmp_arr
    cdef double[:, :, ::1] out = out_arr
    # vertical pass, replicated edges
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for j in range(k):
                    src = y + j - r
                    if src < 0:
                        src = 0
                    elif src >= h:
                        src = h - 1
                    acc = acc + kernel[j] * img[src, x, ch]
                tmp[y, x, ch] = acc
    # horizontal pass
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for j in range(k):
                    src = x + j - r
                    if src < 0:
                        src = 0
                    elif src >= w:
                        src = w - 1
                    acc = acc + kernel[j] * tmp[y, src, ch]
                out[y, x, ch] = acc
    return out_arr
