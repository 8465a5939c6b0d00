"""Backend selection for the row kernels.

The compiled ``_ckernels`` extension is preferred; the numpy implementation in
``_kernels_py`` is used when the extension has not been built. Set
``PREDFORMER_KERNELS=python`` to force the fallback (``cython`` to require the
extension).
"""
import importlib
import os

import numpy as np

from . import _kernels_py

_requested = os.environ.get("PREDFORMER_KERNELS", "auto").lower()


def _load(name):
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("predformer._ckernels")
    try:
        return importlib.import_module("predformer._ckernels")
    except ImportError:
        return _kernels_py


_impl = _load(_requested)


def available_backends():
    out = ["python"]
    try:
        importlib.import_module("predformer._ckernels")
        out.append("cython")
    except ImportError:
        pass
    return out


def backend():
    return _impl.BACKEND


def use_backend(name):
    """Switch the active backend at runtime; returns the previous name."""
    global _impl
    prev = _impl.BACKEND
    _impl = _load(name)
    return prev


def get_backend_module(name):
    return _load(name)


def _rows(a):
    return np.ascontiguousarray(a.reshape(-1, a.shape[-1]))


def layer_norm_fwd(x, gamma, beta, eps):
    shape = x.shape
    y, mean, rstd = _impl.layer_norm_fwd(
        _rows(x), np.ascontiguousarray(gamma, dtype=x.dtype), np.ascontiguousarray(beta, dtype=x.dtype), float(eps)
    )
    return y.reshape(shape), mean, rstd


def layer_norm_bwd(g, x, gamma, mean, rstd):
    shape = x.shape
    dx, dgamma, dbeta = _impl.layer_norm_bwd(
        _rows(g.astype(x.dtype, copy=False)), _rows(x), np.ascontiguousarray(gamma, dtype=x.dtype), mean, rstd
    )
    return dx.reshape(shape), dgamma, dbeta


def softmax_fwd(x):
    return _impl.softmax_fwd(_rows(x)).reshape(x.shape)


def softmax_bwd(y, g):
    return _impl.softmax_bwd(_rows(y), _rows(g.astype(y.dtype, copy=False))).reshape(y.shape)


def silu_fwd(x):
    return _impl.silu_fwd(np.ascontiguousarray(x).reshape(-1)).reshape(x.shape)


def silu_bwd(x, g):
    flat_x = np.ascontiguousarray(x).reshape(-1)
    flat_g = np.ascontiguousarray(g, dtype=x.dtype).reshape(-1)
    return _impl.silu_bwd(flat_x, flat_g).reshape(x.shape)
