# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counterparts of ``_pykernels``; same signatures, same semantics."""
import numpy as np
from libc.math cimport exp, tanh as c_tanh
from scipy.linalg.cython_blas cimport dger, dgemv

BACKEND = "cython"


def sigmoid(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double e
    for i in range(n):
        if x[i] >= 0:
            o[i] = 1.0 / (1.0 + exp(-x[i]))
        else:
            e = exp(x[i])
            o[i] = e / (1.0 + e)
    return out


def tanh(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = c_tanh(x[i])
    return out


def sigmoid_grad_acc(double[::1] out, double[::1] y, double[::1] g):
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        out[i] += g[i] * y[i] * (1.0 - y[i])


def tanh_grad_acc(double[::1] out, double[::1] y, double[::1] g):
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        out[i] += g[i] * (1.0 - y[i] * y[i])


def mul_acc(double[::1] out, double[::1] a, double[::1] b):
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        out[i] += a[i] * b[i]


def softmax(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double m = x[0], s = 0.0
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    for i in range(n):
        o[i] = exp(x[i] - m)
        s += o[i]
    for i in range(n):
        o[i] /= s
    return out


def softmax_grad_acc(double[::1] out, double[::1] y, double[::1] g):
    cdef Py_ssize_t i, n = out.shape[0]
    cdef double d = 0.0
    for i in range(n):
        d += g[i] * y[i]
    for i in range(n):
        out[i] += y[i] * (g[i] - d)


def ger_acc(double[:, ::1] A, double[::1] x, double[::1] y):
    """A += outer(x, y)"""
    # row-major A (m x n) is column-major A.T (n x m): A.T += y x^T
    cdef int m = A.shape[0], n = A.shape[1], inc = 1
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    dger(&n, &m, &alpha, &y[0], &inc, &x[0], &inc, &A[0, 0], &n)


def gemv_t_acc(double[::1] out, double[:, ::1] A, double[::1] g):
    """out += A.T @ g"""
    cdef int m = A.shape[0], n = A.shape[1], inc = 1
    cdef double one = 1.0
    cdef char trans = b'N'
    if m == 0 or n == 0:
        return
    dgemv(&trans, &n, &m, &one, &A[0, 0], &n, &g[0], &inc, &one, &out[0], &inc)
