"""Pure-numpy kernels. Reference semantics for the numba twins in numba_ops.

All elementwise kernels take and return float64 arrays of matching shape.
The softmax / layer-norm kernels operate row-wise on 2-d (n, d) inputs.
"""

import math

import numpy as np

C1 = 0.5
C2 = math.sqrt(2.0 / math.pi)
C3 = 0.044715
C4 = 0.01

BACKEND = "numpy"


# elementwise unary

def gelu_fwd(x):
    return C1 * x * (1.0 + np.tanh(C2 * (x + C3 * x * x * x)))


def gelu_bwd(x, g):
    u = C2 * (x + C3 * x * x * x)
    t = np.tanh(u)
    du = C2 * (1.0 + 3.0 * C3 * x * x)
    return g * (C1 * (1.0 + t) + C1 * x * (1.0 - t * t) * du)


def sigmoid_fwd(x):
    # exp(-x) may overflow for very negative x; 1/inf -> 0 is the right limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    return np.where(x > 0.0, g, 0.0)


def leaky_relu_fwd(x):
    return np.where(x >= 0.0, x, C4 * x)


def leaky_relu_bwd(x, g):
    return np.where(x >= 0.0, g, C4 * g)


def elu_fwd(x):
    with np.errstate(over="ignore"):
        return np.where(x >= 0.0, x, np.exp(np.minimum(x, 0.0)) - 1.0)


def elu_bwd(x, g):
    # right derivative 1 at x == 0
    return np.where(x >= 0.0, g, np.exp(np.minimum(x, 0.0)) * g)


def swish_fwd(x):
    return x * sigmoid_fwd(x)


def swish_bwd(x, g):
    s = sigmoid_fwd(x)
    return g * (s + x * s * (1.0 - s))


# elementwise binary

def max_fwd(x, y):
    return np.maximum(x, y)


def max_bwd(x, y, g):
    gx = np.where(x > y, g, 0.0)
    gy = np.where(y > x, g, 0.0)
    tie = x == y
    if np.any(tie):
        half = 0.5 * g
        gx = np.where(tie, half, gx)
        gy = np.where(tie, half, gy)
    return gx, gy


# row-wise kernels on (n, d)

def softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    with np.errstate(over="ignore"):
        e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, g):
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def log_softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def log_softmax_bwd(y, g):
    return g - np.exp(y) * g.sum(axis=1, keepdims=True)


def layer_norm_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=1)
    var = ((x - mean[:, None]) ** 2).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    return xhat * gamma + beta, mean, rstd


def layer_norm_bwd(x, gamma, mean, rstd, g):
    xhat = (x - mean[:, None]) * rstd[:, None]
    gg = g * gamma
    dgamma = (g * xhat).sum(axis=0)
    dbeta = g.sum(axis=0)
    m1 = gg.mean(axis=1, keepdims=True)
    m2 = (gg * xhat).mean(axis=1, keepdims=True)
    dx = (gg - m1 - xhat * m2) * rstd[:, None]
    return dx, dgamma, dbeta


# optimizer update, in place; p/g/m/v share one shape (1-d or 2-d, any strides)

def adam_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / bc1
    vhat = v / bc2
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)
