# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused row kernels for the autodiff core.

Same contracts as ``_kernels_py``; one pass per row instead of one numpy
temporary per elementwise step. Row statistics accumulate in double.
"""
import numpy as np
from cython cimport floating
from libc.math cimport exp, floorf, sqrt
from libc.string cimport memcpy

BACKEND = "cython"


cdef inline float _expf(float x) noexcept nogil:
    # 2^k * p(r) with a degree-5 minimax polynomial; ~1 ulp over the clamped range.
    # float-typed constants throughout so the loops calling this vectorize
    cdef float k, r, p, scale
    cdef float one = 1.0, half = 0.5
    cdef int bits
    x = <float>-87.0 if x < <float>-87.0 else x
    x = <float>88.0 if x > <float>88.0 else x
    k = floorf(x * <float>1.44269504088896341 + half)
    r = x - k * <float>0.693359375
    r = r + k * <float>2.12194440e-4
    p = <float>1.9875691500e-4
    p = p * r + <float>1.3981999507e-3
    p = p * r + <float>8.3334519073e-3
    p = p * r + <float>4.1665795894e-2
    p = p * r + <float>1.6666665459e-1
    p = p * r + <float>5.0000001201e-1
    p = p * r * r + r + one
    bits = (<int>k + 127) << 23
    memcpy(&scale, &bits, 4)
    return p * scale


def layer_norm_fwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef double mean, var, r, t
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, d), dtype=dtype)
    mean_arr = np.empty(n, dtype=dtype)
    rstd_arr = np.empty(n, dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    cdef floating[::1] mu = mean_arr
    cdef floating[::1] rs = rstd_arr
    with nogil:
        for i in range(n):
            mean = 0.0
            for j in range(d):
                mean = mean + x[i, j]
            mean = mean / d
            var = 0.0
            for j in range(d):
                t = x[i, j] - mean
                var = var + t * t
            var = var / d
            r = 1.0 / sqrt(var + eps)
            for j in range(d):
                y[i, j] = <floating>((x[i, j] - mean) * r * gamma[j] + beta[j])
            mu[i] = <floating>mean
            rs[i] = <floating>r
    return y_arr, mean_arr, rstd_arr


def layer_norm_bwd(floating[:, ::1] g, floating[:, ::1] x, floating[::1] gamma,
                   floating[::1] mean, floating[::1] rstd):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef double s1, s2, xh, gx, r, m
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty((n, d), dtype=dtype)
    dgamma_acc = np.zeros(d, dtype=np.float64)
    dbeta_acc = np.zeros(d, dtype=np.float64)
    cdef floating[:, ::1] dx = dx_arr
    cdef double[::1] dgam = dgamma_acc
    cdef double[::1] dbet = dbeta_acc
    with nogil:
        for i in range(n):
            r = rstd[i]
            m = mean[i]
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                xh = (x[i, j] - m) * r
                gx = g[i, j] * gamma[j]
                s1 = s1 + gx
                s2 = s2 + gx * xh
                dgam[j] = dgam[j] + g[i, j] * xh
                dbet[j] = dbet[j] + g[i, j]
            for j in range(d):
                xh = (x[i, j] - m) * r
                gx = g[i, j] * gamma[j]
                dx[i, j] = <floating>((r / d) * (d * gx - s1 - xh * s2))
    return dx_arr, dgamma_acc.astype(dtype), dbeta_acc.astype(dtype)


def softmax_fwd(floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef floating mx, inv
    cdef double s
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, d), dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    with nogil:
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, d):
                mx = x[i, j] if x[i, j] > mx else mx
            for j in range(d):
                if floating is float:
                    y[i, j] = _expf(x[i, j] - mx)
                else:
                    y[i, j] = exp(x[i, j] - mx)
            s = 0.0
            for j in range(d):
                s = s + y[i, j]
            inv = <floating>(1.0 / s)
            for j in range(d):
                y[i, j] = y[i, j] * inv
    return y_arr


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] g):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    cdef double dot
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty((n, d), dtype=dtype)
    cdef floating[:, ::1] dx = dx_arr
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot = dot + g[i, j] * y[i, j]
            for j in range(d):
                dx[i, j] = <floating>(y[i, j] * (g[i, j] - dot))
    return dx_arr


def silu_fwd(floating[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] y = y_arr
    with nogil:
        for i in range(n):
            if floating is float:
                y[i] = x[i] / (<float>1.0 + _expf(-x[i]))
            else:
                y[i] = x[i] / (1.0 + exp(-x[i]))
    return y_arr


def silu_bwd(floating[::1] x, floating[::1] g):
    cdef Py_ssize_t n = x.shape[0], i
    cdef floating s
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] dx = dx_arr
    with nogil:
        for i in range(n):
            if floating is float:
                s = <float>1.0 / (<float>1.0 + _expf(-x[i]))
            else:
                s = 1.0 / (1.0 + exp(-x[i]))
            dx[i] = g[i] * s * (<floating>1.0 + x[i] * (<floating>1.0 - s))
    return dx_arr
