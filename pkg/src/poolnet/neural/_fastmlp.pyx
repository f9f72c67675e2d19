# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-MLP kernels: BLAS-backed layers with fused bias/ReLU loops.

Same contract as ``_mlp_py``; selected at import by ``poolnet.neural.backend``.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef void _gemm_x_wt(real[:, ::1] x, real[:, ::1] w, real[:, ::1] out) noexcept nogil:
    # out (B, o) = x (B, i) @ w.T, with w stored row-major as (o, i)
    cdef int m = <int> out.shape[1]
    cdef int n = <int> x.shape[0]
    cdef int k = <int> x.shape[1]
    cdef real alpha = 1, beta = 0
    if real is float:
        sgemm("T", "N", &m, &n, &k, &alpha, &w[0, 0], &k, &x[0, 0], &k, &beta, &out[0, 0], &m)
    else:
        dgemm("T", "N", &m, &n, &k, &alpha, &w[0, 0], &k, &x[0, 0], &k, &beta, &out[0, 0], &m)


cdef void _gemm_deltaT_a(real[:, ::1] delta, real[:, ::1] a, real[:, ::1] out) noexcept nogil:
    # out (o, i) = delta.T (o, B) @ a (B, i)
    cdef int m = <int> a.shape[1]
    cdef int n = <int> delta.shape[1]
    cdef int k = <int> delta.shape[0]
    cdef real alpha = 1, beta = 0
    if real is float:
        sgemm("N", "T", &m, &n, &k, &alpha, &a[0, 0], &m, &delta[0, 0], &n, &beta, &out[0, 0], &m)
    else:
        dgemm("N", "T", &m, &n, &k, &alpha, &a[0, 0], &m, &delta[0, 0], &n, &beta, &out[0, 0], &m)


cdef void _gemm_delta_w(real[:, ::1] delta, real[:, ::1] w, real[:, ::1] out) noexcept nogil:
    # out (B, i) = delta (B, o) @ w (o, i)
    cdef int m = <int> w.shape[1]
    cdef int n = <int> delta.shape[0]
    cdef int k = <int> delta.shape[1]
    cdef real alpha = 1, beta = 0
    if real is float:
        sgemm("N", "N", &m, &n, &k, &alpha, &w[0, 0], &m, &delta[0, 0], &k, &beta, &out[0, 0], &m)
    else:
        dgemm("N", "N", &m, &n, &k, &alpha, &w[0, 0], &m, &delta[0, 0], &k, &beta, &out[0, 0], &m)


cdef void _bias_act(real[:, ::1] y, real[::1] b, bint relu) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef real v
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            v = y[i, j] + b[j]
            if relu and v < 0:
                v = 0
            y[i, j] = v


cdef void _bias_sum(real[:, ::1] delta, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(delta.shape[1]):
        out[j] = 0
    for i in range(delta.shape[0]):
        for j in range(delta.shape[1]):
            out[j] += delta[i, j]


cdef void _relu_mask(double[:, ::1] delta, real[:, ::1] act) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(delta.shape[0]):
        for j in range(delta.shape[1]):
            if act[i, j] <= 0:
                delta[i, j] = 0


def _forward(list ws, list bs, cnp.ndarray x, bint keep_cache):
    cdef Py_ssize_t n_layers = len(ws)
    cdef Py_ssize_t i
    acts = [x]
    cur = x
    for i in range(n_layers):
        w = ws[i]
        nxt = np.empty((cur.shape[0], w.shape[0]), dtype=cur.dtype)
        if cur.dtype == np.float32:
            _gemm_x_wt[float](cur, w, nxt)
            _bias_act[float](nxt, bs[i], i < n_layers - 1)
        else:
            _gemm_x_wt[double](cur, w, nxt)
            _bias_act[double](nxt, bs[i], i < n_layers - 1)
        cur = nxt
        if keep_cache:
            acts.append(nxt)
    return acts if keep_cache else cur


def forward_batch(list ws, list bs, x):
    x = np.ascontiguousarray(x)
    if x.shape[0] == 0:
        return np.empty((0, ws[-1].shape[0]), dtype=x.dtype)
    return _forward(ws, bs, x, False)


def forward_cache(list ws, list bs, x):
    x = np.ascontiguousarray(x)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    return _forward(ws, bs, x, True)


def backward_from_cache(list ws, list acts, d_out):
    """Backpropagate with float64 accumulation; grads returned in the param dtype."""
    dtype = ws[0].dtype
    cdef Py_ssize_t n_layers = len(ws)
    cdef Py_ssize_t i
    delta = np.ascontiguousarray(d_out, dtype=np.float64)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        a64 = np.ascontiguousarray(acts[i], dtype=np.float64)
        w64 = np.ascontiguousarray(ws[i], dtype=np.float64)
        gw = np.empty((w64.shape[0], w64.shape[1]), dtype=np.float64)
        gb = np.empty(w64.shape[0], dtype=np.float64)
        _gemm_deltaT_a[double](delta, a64, gw)
        _bias_sum[double](delta, gb)
        if i > 0:
            prev = np.empty((delta.shape[0], w64.shape[1]), dtype=np.float64)
            _gemm_delta_w[double](delta, w64, prev)
            if acts[i].dtype == np.float32:
                _relu_mask[float](prev, acts[i])
            else:
                _relu_mask[double](prev, acts[i])
            delta = prev
        grads_w[i] = gw.astype(dtype)
        grads_b[i] = gb.astype(dtype)
    return grads_w, grads_b
