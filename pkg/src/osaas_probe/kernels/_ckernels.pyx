# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv1d, SELU and Adam kernels (float64, C-contiguous)."""
import numpy as np
from libc.math cimport sqrt, pow, exp, expm1

cdef double SELU_LAMBDA = 1.0507009873554804934193349852946
cdef double SELU_ALPHA = 1.6732632423543772848170429916717


cdef inline void _axpy(double a, const double* x, double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        y[k] += a * x[k]


cdef inline double _dot(const double* x, const double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(n):
        acc += x[k] * y[k]
    return acc


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w, const double[::1] b):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], P = w.shape[2]
    cdef Py_ssize_t pad = P // 2
    # batch-last layout so every inner loop runs over B contiguous samples
    xt_arr = np.ascontiguousarray(np.transpose(x, (1, 2, 0)))
    yt_arr = np.empty((O, L, B))
    cdef double[:, :, ::1] xt = xt_arr
    cdef double[:, :, ::1] yt = yt_arr
    cdef Py_ssize_t o, c, i, k, s, n
    with nogil:
        for o in range(O):
            for k in range(L):
                for n in range(B):
                    yt[o, k, n] = b[o]
                for c in range(C):
                    for i in range(P):
                        s = k + i - pad
                        if 0 <= s < L:
                            _axpy(w[o, c, i], &xt[c, s, 0], &yt[o, k, 0], B)
    return np.ascontiguousarray(np.transpose(yt_arr, (2, 0, 1)))


def conv1d_backward(const double[:, :, ::1] g, const double[:, :, ::1] x, const double[:, :, ::1] w):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], P = w.shape[2]
    cdef Py_ssize_t pad = P // 2
    xt_arr = np.ascontiguousarray(np.transpose(x, (1, 2, 0)))
    gt_arr = np.ascontiguousarray(np.transpose(g, (1, 2, 0)))
    gxt_arr = np.zeros((C, L, B))
    gw_arr = np.zeros((O, C, P))
    gb_arr = np.zeros(O)
    cdef double[:, :, ::1] xt = xt_arr
    cdef double[:, :, ::1] gt = gt_arr
    cdef double[:, :, ::1] gxt = gxt_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t o, c, i, k, s, n
    cdef double acc
    with nogil:
        for o in range(O):
            for k in range(L):
                acc = 0.0
                for n in range(B):
                    acc += gt[o, k, n]
                gb[o] += acc
                for c in range(C):
                    for i in range(P):
                        s = k + i - pad
                        if 0 <= s < L:
                            gw[o, c, i] += _dot(&gt[o, k, 0], &xt[c, s, 0], B)
                            _axpy(w[o, c, i], &gt[o, k, 0], &gxt[c, s, 0], B)
    return np.ascontiguousarray(np.transpose(gxt_arr, (2, 0, 1))), gw_arr, gb_arr


def selu_forward(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], j
    out = np.empty(n)
    cdef double[::1] y = out
    cdef double v
    with nogil:
        for j in range(n):
            v = x[j]
            y[j] = SELU_LAMBDA * v if v > 0 else SELU_LAMBDA * SELU_ALPHA * expm1(v)
    return out


def selu_backward(const double[::1] g, const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], j
    out = np.empty(n)
    cdef double[::1] y = out
    cdef double v
    with nogil:
        for j in range(n):
            v = x[j]
            y[j] = g[j] * (SELU_LAMBDA if v > 0 else SELU_LAMBDA * SELU_ALPHA * exp(v))
    return out


def adam_update(double[::1] param, const double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t):
    cdef Py_ssize_t n = param.shape[0], j
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef double gj, mh, vh
    with nogil:
        for j in range(n):
            gj = grad[j]
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj
            mh = m[j] / c1
            vh = v[j] / c2
            param[j] -= lr * mh / (sqrt(vh) + eps)
