# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the hot elementwise/row-wise passes.

Same contracts as ``_pykernels``. Row reductions accumulate in double for
both precisions.
"""

import numpy as np

cimport cython
from cython cimport floating
from libc.math cimport exp, expf, log, sqrt, tanh

cdef double GELU_C = 0.7978845608028654


cdef inline double _exp(floating x) nogil:
    # single precision inputs use the cheaper float exponential
    if floating is float:
        return expf(x)
    return exp(x)


def layer_norm_fwd(floating[:, ::1] x, floating[::1] gain, floating[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, d), dtype=dtype)
    xhat_arr = np.empty((n, d), dtype=dtype)
    rstd_arr = np.empty(n, dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef floating[::1] rstd = rstd_arr
    cdef double mean, var, r, c
    with nogil:
        for i in range(n):
            mean = 0.0
            for k in range(d):
                mean += x[i, k]
            mean /= d
            var = 0.0
            for k in range(d):
                c = x[i, k] - mean
                var += c * c
            var /= d
            r = 1.0 / sqrt(var + eps)
            rstd[i] = <floating>r
            for k in range(d):
                c = (x[i, k] - mean) * r
                xhat[i, k] = <floating>c
                y[i, k] = <floating>(c * gain[k] + bias[k])
    return y_arr, xhat_arr, rstd_arr


def layer_norm_bwd(floating[:, ::1] dy, floating[:, ::1] xhat, floating[::1] rstd, floating[::1] gain):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty((n, d), dtype=dtype)
    dgain_acc = np.zeros(d, dtype=np.float64)
    dbias_acc = np.zeros(d, dtype=np.float64)
    cdef floating[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_acc
    cdef double[::1] dbias = dbias_acc
    cdef double sg, sgx, g
    with nogil:
        for i in range(n):
            sg = 0.0
            sgx = 0.0
            for k in range(d):
                g = dy[i, k] * gain[k]
                sg += g
                sgx += g * xhat[i, k]
                dgain[k] += dy[i, k] * xhat[i, k]
                dbias[k] += dy[i, k]
            sg /= d
            sgx /= d
            for k in range(d):
                g = dy[i, k] * gain[k]
                dx[i, k] = <floating>((g - sg - xhat[i, k] * sgx) * rstd[i])
    return dx_arr, dgain_acc.astype(dtype), dbias_acc.astype(dtype)


def causal_softmax_fwd(floating[:, :, ::1] s):
    cdef Py_ssize_t n = s.shape[0], T = s.shape[1], b, i, j
    dtype = np.float32 if floating is float else np.float64
    p_arr = np.zeros((n, T, T), dtype=dtype)
    cdef floating[:, :, ::1] p = p_arr
    cdef double m, tot, e
    with nogil:
        for b in range(n):
            for i in range(T):
                m = s[b, i, 0]
                for j in range(1, i + 1):
                    if s[b, i, j] > m:
                        m = s[b, i, j]
                tot = 0.0
                for j in range(i + 1):
                    e = _exp(<floating>(s[b, i, j] - m))
                    p[b, i, j] = <floating>e
                    tot += e
                tot = 1.0 / tot
                for j in range(i + 1):
                    p[b, i, j] = <floating>(p[b, i, j] * tot)
    return p_arr


def causal_softmax_bwd(floating[:, :, ::1] dp, floating[:, :, ::1] p):
    cdef Py_ssize_t n = p.shape[0], T = p.shape[1], b, i, j
    dtype = np.float32 if floating is float else np.float64
    ds_arr = np.zeros((n, T, T), dtype=dtype)
    cdef floating[:, :, ::1] ds = ds_arr
    cdef double dot
    with nogil:
        for b in range(n):
            for i in range(T):
                dot = 0.0
                for j in range(i + 1):
                    dot += dp[b, i, j] * p[b, i, j]
                for j in range(i + 1):
                    ds[b, i, j] = <floating>(p[b, i, j] * (dp[b, i, j] - dot))
    return ds_arr


def xent_fwd(floating[:, ::1] logits, long[::1] targets):
    cdef Py_ssize_t n = logits.shape[0], V = logits.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    nll_arr = np.empty(n, dtype=dtype)
    probs_arr = np.empty((n, V), dtype=dtype)
    cdef floating[::1] nll = nll_arr
    cdef floating[:, ::1] probs = probs_arr
    cdef double m, tot, e, inv
    with nogil:
        for i in range(n):
            m = logits[i, 0]
            for k in range(1, V):
                if logits[i, k] > m:
                    m = logits[i, k]
            tot = 0.0
            for k in range(V):
                e = _exp(<floating>(logits[i, k] - m))
                probs[i, k] = <floating>e
                tot += e
            inv = 1.0 / tot
            for k in range(V):
                probs[i, k] = <floating>(probs[i, k] * inv)
            nll[i] = <floating>(log(tot) - (logits[i, targets[i]] - m))
    return nll_arr, probs_arr


def xent_bwd(floating[:, ::1] probs, long[::1] targets, floating[::1] row_weight):
    cdef Py_ssize_t n = probs.shape[0], V = probs.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    g_arr = np.empty((n, V), dtype=dtype)
    cdef floating[:, ::1] g = g_arr
    with nogil:
        for i in range(n):
            for k in range(V):
                g[i, k] = probs[i, k] * row_weight[i]
            g[i, targets[i]] -= row_weight[i]
    return g_arr


def gelu_fwd(floating[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty(n, dtype=dtype)
    t_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] y = y_arr
    cdef floating[::1] t = t_arr
    cdef double v, th
    with nogil:
        for i in range(n):
            v = x[i]
            th = tanh(GELU_C * (v + 0.044715 * v * v * v))
            t[i] = <floating>th
            y[i] = <floating>(0.5 * v * (1.0 + th))
    return y_arr, t_arr


def gelu_bwd(floating[::1] dy, floating[::1] x, floating[::1] t):
    cdef Py_ssize_t n = x.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    g_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] g = g_arr
    cdef double v, th, du
    with nogil:
        for i in range(n):
            v = x[i]
            th = t[i]
            du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
            g[i] = <floating>(dy[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du))
    return g_arr
