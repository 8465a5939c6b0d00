"""Pure-numpy row kernels. Used when the compiled extension is unavailable.

Every function takes C-contiguous 2-D arrays (rows x features) and returns
new arrays of the same dtype.
"""
import numpy as np

BACKEND = "python"


def layer_norm_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gamma + beta
    return y, mean[:, 0], rstd[:, 0]


def layer_norm_bwd(g, x, gamma, mean, rstd):
    d = x.shape[1]
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgamma = (g * xhat).sum(axis=0)
    dbeta = g.sum(axis=0)
    gx = g * gamma
    dx = (rstd[:, None] / d) * (
        d * gx - gx.sum(axis=1, keepdims=True) - xhat * (gx * xhat).sum(axis=1, keepdims=True)
    )
    return dx.astype(x.dtype, copy=False), dgamma, dbeta


def softmax_fwd(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, g):
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def silu_fwd(x):
    return x * _sigmoid(x)


def silu_bwd(x, g):
    s = _sigmoid(x)
    return g * s * (1.0 + x * (1.0 - s))
