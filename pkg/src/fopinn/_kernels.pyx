# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused single-pass elementwise kernels over contiguous float64 buffers."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


cdef inline double _sigmoid(double z) noexcept nogil:
    # branch-free so the loops vectorise; exp(-z) -> inf gives the correct limit 0
    return 1.0 / (1.0 + exp(-z))


def sigmoid(z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] src = np.ascontiguousarray(z, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(src)
    cdef double[::1] s = src
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = s.shape[0]
    with nogil:
        for i in range(n):
            o[i] = _sigmoid(s[i])
    return out.reshape(np.shape(z))


def swish(z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] src = np.ascontiguousarray(z, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(src)
    cdef double[::1] s = src
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = s.shape[0]
    with nogil:
        for i in range(n):
            o[i] = s[i] * _sigmoid(s[i])
    return out.reshape(np.shape(z))


def swish_derivative(z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] src = np.ascontiguousarray(z, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(src)
    cdef double[::1] s = src
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = s.shape[0]
    cdef double sg
    with nogil:
        for i in range(n):
            sg = _sigmoid(s[i])
            o[i] = sg + s[i] * sg * (1.0 - sg)
    return out.reshape(np.shape(z))


def adam_update(double[::1] params, double[::1] grads, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t):
    """In-place bias-corrected Adam step on flat float64 arrays."""
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double g
    with nogil:
        for i in range(n):
            g = grads[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
