# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels. Mirrors ``_fallback`` function for function."""

import numpy as np

from libc.math cimport exp, sqrt

cdef enum:
    IDENTITY = 0
    SIGMOID = 1
    RELU = 2


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        e = exp(-z)
        return 1.0 / (1.0 + e)
    e = exp(z)
    return e / (1.0 + e)


cdef inline void _axpy(double* y, const double* x, double a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        y[i] += a * x[i]


cdef void _dense_forward(const double[:, ::1] wt, const double[::1] b, const double[:, ::1] inp,
                         double[:, ::1] out, int act) noexcept nogil:
    # wt is the transposed weight matrix (in_dim, out_dim) so the inner loop is contiguous
    cdef Py_ssize_t n = inp.shape[0], n_in = wt.shape[0], n_out = wt.shape[1]
    cdef Py_ssize_t s, j, k
    cdef double* row
    for s in range(n):
        row = &out[s, 0]
        for j in range(n_out):
            row[j] = b[j]
        for k in range(n_in):
            _axpy(row, &wt[k, 0], inp[s, k], n_out)
        if act == SIGMOID:
            for j in range(n_out):
                row[j] = _sigmoid(row[j])
        elif act == RELU:
            for j in range(n_out):
                if row[j] < 0:
                    row[j] = 0.0


cdef void _dense_backward(const double[:, ::1] w, const double[:, ::1] inp, const double[:, ::1] out,
                          double[:, ::1] delta, double[:, ::1] gw, double[::1] gb,
                          double[:, ::1] delta_in, int act, bint propagate) noexcept nogil:
    # delta holds dL/d(out) on entry and dL/dz after the activation step
    cdef Py_ssize_t n = inp.shape[0], n_in = w.shape[1], n_out = w.shape[0]
    cdef Py_ssize_t s, j, k
    cdef double a, d
    cdef double* drow
    for s in range(n):
        drow = &delta[s, 0]
        if act == SIGMOID:
            for j in range(n_out):
                a = out[s, j]
                drow[j] = drow[j] * (a * (1.0 - a))
        elif act == RELU:
            for j in range(n_out):
                if out[s, j] <= 0:
                    drow[j] = 0.0
    for j in range(n_out):
        gb[j] = 0.0
        for k in range(n_in):
            gw[j, k] = 0.0
    for s in range(n):
        for j in range(n_out):
            d = delta[s, j]
            gb[j] += d
            _axpy(&gw[j, 0], &inp[s, 0], d, n_in)
    if propagate:
        for s in range(n):
            drow = &delta_in[s, 0]
            for k in range(n_in):
                drow[k] = 0.0
            for j in range(n_out):
                _axpy(drow, &w[j, 0], delta[s, j], n_in)


def forward_batch(list weights, list biases, act_codes, x):
    cdef Py_ssize_t n_layers = len(weights), i
    cdef double[:, ::1] inp = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] out
    for i in range(n_layers):
        out = np.empty((inp.shape[0], weights[i].shape[0]))
        _dense_forward(np.ascontiguousarray(weights[i].T), biases[i], inp, out, <int>act_codes[i])
        inp = out
    return np.asarray(inp)


def loss_and_grads(list weights, list biases, act_codes, x, y, list grad_w, list grad_b):
    """MSE of the batch; gradients are written into ``grad_w``/``grad_b`` in place."""
    cdef Py_ssize_t n_layers = len(weights), i, s, j, n_out
    cdef double[:, ::1] xin = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] target = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xin.shape[0]
    acts = [xin]
    cdef double[:, ::1] cur = xin
    cdef double[:, ::1] nxt
    for i in range(n_layers):
        nxt = np.empty((n, weights[i].shape[0]))
        _dense_forward(np.ascontiguousarray(weights[i].T), biases[i], cur, nxt, <int>act_codes[i])
        acts.append(nxt)
        cur = nxt

    n_out = cur.shape[1]
    cdef double[:, ::1] delta = np.empty((n, n_out))
    cdef double diff, total = 0.0
    cdef double scale = 2.0 / (n * n_out)
    for s in range(n):
        for j in range(n_out):
            diff = cur[s, j] - target[s, j]
            total += diff * diff
            delta[s, j] = scale * diff

    cdef double[:, ::1] delta_in
    for i in range(n_layers - 1, -1, -1):
        delta_in = np.empty((n, weights[i].shape[1]))
        _dense_backward(weights[i], acts[i], acts[i + 1], delta, grad_w[i], grad_b[i],
                        delta_in, <int>act_codes[i], i > 0)
        delta = delta_in
    return total / (n * n_out)


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, double bc1, double bc2):
    """In-place bias-corrected Adam on flat float64 arrays."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
            p[i] = p[i] - lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
