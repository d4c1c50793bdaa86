# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled float32 training and inference kernels.

Matrix products go straight to BLAS sgemm; bias/ReLU/softmax/update loops
are fused C passes. Equivalent to the NumPy reference backend up to float
summation order. Weight and bias arrays must be C-contiguous float32 and
are updated in place.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()

name = "compiled"


cdef void _mm_ab(float[:, ::1] A, float[:, ::1] B, float[:, ::1] C) noexcept nogil:
    # Row-major C(m,n) = A(m,k) @ B(k,n), via column-major C^T = B^T A^T.
    cdef int m = A.shape[0], k = A.shape[1], n = B.shape[1]
    cdef float one = 1.0, zero = 0.0
    cdef char nt = b'N'
    if m == 0 or n == 0 or k == 0:
        return
    sgemm(&nt, &nt, &n, &m, &k, &one, &B[0, 0], &n, &A[0, 0], &k, &zero, &C[0, 0], &n)


cdef void _mm_atb(float[:, ::1] A, float[:, ::1] B, float[:, ::1] C) noexcept nogil:
    # Row-major C(k,n) = A(m,k)^T @ B(m,n), via column-major C^T = B^T A.
    cdef int m = A.shape[0], k = A.shape[1], n = B.shape[1]
    cdef float one = 1.0, zero = 0.0
    cdef char nt = b'N', tt = b'T'
    if m == 0 or n == 0 or k == 0:
        return
    sgemm(&nt, &tt, &n, &k, &m, &one, &B[0, 0], &n, &A[0, 0], &k, &zero, &C[0, 0], &n)


cdef void _mm_abt(float[:, ::1] A, float[:, ::1] B, float[:, ::1] C) noexcept nogil:
    # Row-major C(m,k) = A(m,n) @ B(k,n)^T, via column-major C^T = B A^T.
    cdef int m = A.shape[0], n = A.shape[1], k = B.shape[0]
    cdef float one = 1.0, zero = 0.0
    cdef char nt = b'N', tt = b'T'
    if m == 0 or n == 0 or k == 0:
        return
    sgemm(&tt, &nt, &k, &m, &n, &one, &B[0, 0], &n, &A[0, 0], &n, &zero, &C[0, 0], &k)


cdef void _add_bias_relu(float[:, ::1] Z, float[::1] b, bint relu) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef float v
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            v = Z[i, j] + b[j]
            if relu and v < 0.0:
                v = 0.0
            Z[i, j] = v


def _check_params(weights, biases):
    for arr in list(weights) + list(biases):
        if not (isinstance(arr, np.ndarray) and arr.dtype == np.float32 and arr.flags["C_CONTIGUOUS"]):
            raise TypeError("compiled backend requires C-contiguous float32 parameters")


def _forward(weights, biases, X, keep_acts):
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t l
    acts = [X]
    A = X
    for l in range(last + 1):
        Z = np.empty((A.shape[0], weights[l].shape[1]), dtype=np.float32)
        _mm_ab(A, weights[l], Z)
        _add_bias_relu(Z, biases[l], l < last)
        A = Z
        if keep_acts:
            acts.append(A)
    return (A, acts) if keep_acts else (A, None)


def logits(weights, biases, X):
    """Final-layer pre-softmax outputs for a batch X of shape (n, d)."""
    _check_params(weights, biases)
    X = np.ascontiguousarray(X, dtype=np.float32)
    out, _ = _forward(weights, biases, X, False)
    return out


cdef double _softmax_loss_grad(float[:, ::1] Z, cnp.int64_t[::1] y) except? -1.0 nogil:
    # In place: Z holds logits on entry, (softmax - onehot)/n on exit.
    # Returns mean negative log-likelihood.
    cdef Py_ssize_t n = Z.shape[0], c = Z.shape[1]
    cdef Py_ssize_t i, j
    cdef float zmax, v
    cdef double s, loss = 0.0, inv_n = 1.0 / <double> n
    for i in range(n):
        if y[i] < 0 or y[i] >= c:
            with gil:
                raise ValueError("label out of range for the output layer")
        zmax = Z[i, 0]
        for j in range(1, c):
            if Z[i, j] > zmax:
                zmax = Z[i, j]
        s = 0.0
        for j in range(c):
            v = <float> exp(<double> (Z[i, j] - zmax))
            Z[i, j] = v
            s += <double> v
        loss -= log(<double> Z[i, y[i]] / s)
        for j in range(c):
            Z[i, j] = <float> ((<double> Z[i, j] / s) * inv_n)
        Z[i, y[i]] -= <float> inv_n
    return loss * inv_n


cdef void _colsum(float[:, ::1] G, float[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(out.shape[0]):
        out[j] = 0.0
    for i in range(G.shape[0]):
        for j in range(G.shape[1]):
            out[j] += G[i, j]


cdef void _relu_mask(float[:, ::1] G, float[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(G.shape[0]):
        for j in range(G.shape[1]):
            if A[i, j] <= 0.0:
                G[i, j] = 0.0


cdef void _sgd_update(float[:, ::1] W, float[::1] b, float[:, ::1] dW,
                      float[::1] db, float lr) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            W[i, j] -= lr * dW[i, j]
    for j in range(b.shape[0]):
        b[j] -= lr * db[j]


def probabilities(weights, biases, X):
    """Row-stochastic softmax outputs for a batch X."""
    Z = logits(weights, biases, X)
    cdef float[:, ::1] Zv = Z
    cdef Py_ssize_t i, j
    cdef float zmax
    cdef double s
    with nogil:
        for i in range(Zv.shape[0]):
            zmax = Zv[i, 0]
            for j in range(1, Zv.shape[1]):
                if Zv[i, j] > zmax:
                    zmax = Zv[i, j]
            s = 0.0
            for j in range(Zv.shape[1]):
                Zv[i, j] = <float> exp(<double> (Zv[i, j] - zmax))
                s += <double> Zv[i, j]
            for j in range(Zv.shape[1]):
                Zv[i, j] = <float> (<double> Zv[i, j] / s)
    return Z


def step_batch(weights, biases, X, y, double lr, Py_ssize_t freeze_below=0):
    """One SGD step on mean negative log-likelihood; returns the batch loss.

    Layers with index < freeze_below keep their parameters untouched.
    Backpropagation always uses the pre-update weights.
    """
    _check_params(weights, biases)
    X = np.ascontiguousarray(X, dtype=np.float32)
    y = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t n = X.shape[0]
    if n == 0:
        return 0.0
    if y.shape[0] != n:
        raise ValueError("labels length does not match batch size")

    out, acts = _forward(weights, biases, X, True)
    cdef double loss = _softmax_loss_grad(out, y)

    cdef Py_ssize_t l
    cdef float lrf = <float> lr
    G = out
    for l in range(last, freeze_below - 1, -1):
        dW = np.empty_like(weights[l])
        db = np.empty_like(biases[l])
        _mm_atb(acts[l], G, dW)
        _colsum(G, db)
        if l > freeze_below:
            Gp = np.empty((n, weights[l].shape[0]), dtype=np.float32)
            _mm_abt(G, weights[l], Gp)
            _relu_mask(Gp, acts[l])
            G = Gp
        _sgd_update(weights[l], biases[l], dW, db, lrf)
    return loss
