"""Numba @njit twins of the numpy kernels.

Same call surface as numpy_ops. Elementwise kernels expect contiguous 1-d
float64 arrays (the tensor layer flattens before dispatch), row-wise kernels
expect contiguous 2-d (n, d). fastmath stays off so both backends agree to
the last ulp wherever libm does.
"""

import math

import numpy as np
from numba import njit

C1 = 0.5
C2 = math.sqrt(2.0 / math.pi)
C3 = 0.044715
C4 = 0.01

BACKEND = "numba"


@njit(cache=True)
def gelu_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        out[i] = C1 * xi * (1.0 + math.tanh(C2 * (xi + C3 * xi * xi * xi)))
    return out


@njit(cache=True)
def gelu_bwd(x, g):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        t = math.tanh(C2 * (xi + C3 * xi * xi * xi))
        du = C2 * (1.0 + 3.0 * C3 * xi * xi)
        out[i] = g[i] * (C1 * (1.0 + t) + C1 * xi * (1.0 - t * t) * du)
    return out


@njit(cache=True)
def sigmoid_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = 1.0 / (1.0 + math.exp(-x[i]))
    return out


@njit(cache=True)
def sigmoid_bwd(y, g):
    out = np.empty_like(y)
    for i in range(y.shape[0]):
        out[i] = g[i] * y[i] * (1.0 - y[i])
    return out


@njit(cache=True)
def tanh_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = math.tanh(x[i])
    return out


@njit(cache=True)
def tanh_bwd(y, g):
    out = np.empty_like(y)
    for i in range(y.shape[0]):
        out[i] = g[i] * (1.0 - y[i] * y[i])
    return out


@njit(cache=True)
def relu_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i] if x[i] > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_bwd(x, g):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = g[i] if x[i] > 0.0 else 0.0
    return out


@njit(cache=True)
def leaky_relu_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i] if x[i] >= 0.0 else C4 * x[i]
    return out


@njit(cache=True)
def leaky_relu_bwd(x, g):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = g[i] if x[i] >= 0.0 else C4 * g[i]
    return out


@njit(cache=True)
def elu_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i] if x[i] >= 0.0 else math.exp(x[i]) - 1.0
    return out


@njit(cache=True)
def elu_bwd(x, g):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = g[i] if x[i] >= 0.0 else math.exp(x[i]) * g[i]
    return out


@njit(cache=True)
def swish_fwd(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i] / (1.0 + math.exp(-x[i]))
    return out


@njit(cache=True)
def swish_bwd(x, g):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        s = 1.0 / (1.0 + math.exp(-x[i]))
        out[i] = g[i] * (s + x[i] * s * (1.0 - s))
    return out


@njit(cache=True)
def max_fwd(x, y):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = x[i] if x[i] > y[i] else y[i]
    return out


@njit(cache=True)
def max_bwd(x, y, g):
    gx = np.zeros_like(x)
    gy = np.zeros_like(y)
    for i in range(x.shape[0]):
        if x[i] > y[i]:
            gx[i] = g[i]
        elif y[i] > x[i]:
            gy[i] = g[i]
        else:
            gx[i] = 0.5 * g[i]
            gy[i] = 0.5 * g[i]
    return gx, gy


@njit(cache=True)
def softmax_fwd(x):
    n, d = x.shape
    out = np.empty_like(x)
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(d):
            e = math.exp(x[i, j] - m)
            out[i, j] = e
            s += e
        inv = 1.0 / s
        for j in range(d):
            out[i, j] *= inv
    return out


@njit(cache=True)
def softmax_bwd(y, g):
    n, d = y.shape
    out = np.empty_like(y)
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += g[i, j] * y[i, j]
        for j in range(d):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out


@njit(cache=True)
def log_softmax_fwd(x):
    n, d = x.shape
    out = np.empty_like(x)
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(d):
            s += math.exp(x[i, j] - m)
        lse = math.log(s)
        for j in range(d):
            out[i, j] = x[i, j] - m - lse
    return out


@njit(cache=True)
def log_softmax_bwd(y, g):
    n, d = y.shape
    out = np.empty_like(y)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += g[i, j]
        for j in range(d):
            out[i, j] = g[i, j] - math.exp(y[i, j]) * s
    return out


@njit(cache=True)
def layer_norm_fwd(x, gamma, beta, eps):
    n, d = x.shape
    out = np.empty_like(x)
    mean = np.empty(n)
    rstd = np.empty(n)
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            diff = x[i, j] - mu
            var += diff * diff
        var /= d
        r = 1.0 / math.sqrt(var + eps)
        mean[i] = mu
        rstd[i] = r
        for j in range(d):
            out[i, j] = (x[i, j] - mu) * r * gamma[j] + beta[j]
    return out, mean, rstd


@njit(cache=True)
def layer_norm_bwd(x, gamma, mean, rstd, g):
    n, d = x.shape
    dx = np.empty_like(x)
    dgamma = np.zeros(d)
    dbeta = np.zeros(d)
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            gg = g[i, j] * gamma[j]
            m1 += gg
            m2 += gg * xhat
            dgamma[j] += g[i, j] * xhat
            dbeta[j] += g[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dx[i, j] = (g[i, j] * gamma[j] - m1 - xhat * m2) * rstd[i]
    return dx, dgamma, dbeta


@njit(cache=True)
def _adam_1d(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * (mhat / (math.sqrt(vhat) + eps) + wd * p[i])


@njit(cache=True)
def _adam_2d(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            m[i, j] = beta1 * m[i, j] + (1.0 - beta1) * g[i, j]
            v[i, j] = beta2 * v[i, j] + (1.0 - beta2) * g[i, j] * g[i, j]
            mhat = m[i, j] / bc1
            vhat = v[i, j] / bc2
            p[i, j] -= lr * (mhat / (math.sqrt(vhat) + eps) + wd * p[i, j])


def adam_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    # strided views (sliced supernet params) are fine: the kernels index, never reshape
    if p.ndim == 1:
        _adam_1d(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2)
    elif p.ndim == 2:
        _adam_2d(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2)
    else:
        raise ValueError(f"adam_update supports 1-d/2-d parameters, got ndim={p.ndim}")
