"""numpy implementations of the hot elementwise / rank-1 kernels.

Every ``*_acc`` function accumulates into its first argument in place.
All arrays are float64 and C-contiguous; vectors are 1-D.
"""
import numpy as np

BACKEND = "python"


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(x)


def sigmoid_grad_acc(out, y, g):
    out += g * y * (1.0 - y)


def tanh_grad_acc(out, y, g):
    out += g * (1.0 - y * y)


def mul_acc(out, a, b):
    out += a * b


def softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def softmax_grad_acc(out, y, g):
    out += y * (g - np.dot(g, y))


def ger_acc(A, x, y):
    """A += outer(x, y)"""
    A += np.outer(x, y)


def gemv_t_acc(out, A, g):
    """out += A.T @ g"""
    out += A.T @ g
