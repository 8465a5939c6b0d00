"""Row-major n-d tensor with tape-based reverse-mode autodiff.

A :class:`Tensor` wraps a numpy array. Operations executed while a
:class:`GradTape` is active and at least one input is tracked append a node
to that tape; ``tape.backward(loss, params)`` replays the nodes in reverse
insertion order. Outside a tape nothing is recorded and no gradient state is
allocated (inference mode).

Broadcasting is deliberately narrow: elementwise ops require identical shapes
or a Python scalar; batched matmul requires equal leading axes; the only
implicit expansion is the trailing-vector bias of :func:`linear` and the
affine pair of :func:`layer_norm`.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import kernels

_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_active_tapes: list["GradTape"] = []


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    """n-d float32/float64 array, optionally tracked for gradients.

    ``requires_grad`` marks a leaf (a parameter or an input being
    differentiated). ``grad_node`` is ``None`` unless the tensor has been
    recorded on a live tape.
    """

    __slots__ = ("data", "requires_grad", "_tape", "_slot", "name")

    def __init__(self, data, dtype=None, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _DTYPES:
            arr = arr.astype(np.float32)
        if any(n < 1 for n in arr.shape):
            raise ShapeError(f"all axis lengths must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self._tape = None
        self._slot = -1
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad_node(self):
        if self._tape is None or self._tape._consumed:
            return None
        return (self._tape, self._slot)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: int, inputs: tuple, backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class GradTape:
    """Append-only record of primitive ops. Single use: one backward per tape.

    >>> w = Tensor(np.ones(3), requires_grad=True)
    >>> with GradTape() as tape:
    ...     loss = (w * w).sum()
    >>> [g.tolist() for g in tape.backward(loss, [w])]
    [[2.0, 2.0, 2.0]]
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._nslots = 0
        self._consumed = False

    def __enter__(self):
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes.remove(self)
        return False

    def _slot_of(self, t: Tensor) -> int:
        if t._tape is self:
            return t._slot
        if t.requires_grad:
            t._tape, t._slot = self, self._nslots
            self._nslots += 1
            return t._slot
        return -1

    def _record(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> bool:
        slots = tuple(self._slot_of(t) for t in inputs)
        if all(s < 0 for s in slots):
            return False
        out._tape, out._slot = self, self._nslots
        self._nslots += 1
        self.nodes.append(_Node(out._slot, slots, backward))
        return True

    def backward(self, loss: Tensor, params: Sequence[Tensor] = ()) -> list[np.ndarray]:
        """Gradients of scalar ``loss`` w.r.t. each tensor in ``params``.

        Parameters the loss does not depend on get zero arrays.
        """
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward()")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not produced under this tape")
        self._consumed = True
        grads: list = [None] * self._nslots
        grads[loss._slot] = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = grads[node.out]
            if g is None:
                continue
            grads[node.out] = None
            in_grads = node.backward(g)
            for slot, gi in zip(node.inputs, in_grads):
                if slot < 0 or gi is None:
                    continue
                if grads[slot] is None:
                    grads[slot] = gi
                else:
                    grads[slot] = grads[slot] + gi
        out = []
        for p in params:
            g = grads[p._slot] if p._tape is self and p._slot >= 0 else None
            out.append(np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype).reshape(p.shape))
        self.nodes = []
        return out


def current_tape() -> GradTape | None:
    return _active_tapes[-1] if _active_tapes else None


def _wrap(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None:
        tape._record(out, inputs, backward)
    return out


def custom_op(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Register an op with a user-supplied backward rule.

    ``backward(g)`` receives the output gradient and returns one gradient (or
    ``None``) per input.
    """
    return _wrap(np.asarray(data), tuple(inputs), backward)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no general broadcasting)")


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _wrap(a.data + a.dtype.type(c), (a,), lambda g: (g,))
    _same_shape(a, b, "add")
    return _wrap(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    _same_shape(a, b, "sub")
    return _wrap(a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _wrap(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = a.dtype.type(float(b))
        return _wrap(a.data * c, (a,), lambda g: (g * c,))
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _wrap(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def mul_const(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by an untracked array of identical shape (dropout masks)."""
    mask = np.asarray(mask, dtype=a.dtype)
    if mask.shape != a.shape:
        raise ShapeError(f"mul_const: mask {mask.shape} vs tensor {a.shape}")
    return _wrap(a.data * mask, (a,), lambda g: (g * mask,))


def silu(x: Tensor) -> Tensor:
    xd = x.data
    return _wrap(kernels.silu_fwd(xd), (x,), lambda g: (kernels.silu_bwd(xd, g),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    xd = x.data
    u = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(u)
    y = 0.5 * xd * (1.0 + th)

    def back(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + th) + 0.5 * xd * (1.0 - th * th) * du),)

    return _wrap(y.astype(xd.dtype, copy=False), (x,), back)


# ---------------------------------------------------------------- reductions

def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _wrap(np.asarray(x.data.sum(dtype=x.dtype)), (x,), lambda g: (np.broadcast_to(g, shape),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    shape = x.shape
    dt = x.dtype
    return _wrap(
        np.asarray(x.data.mean(dtype=dt)), (x,), lambda g: (np.broadcast_to(g / dt.type(n), shape),)
    )


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched ``[..., M, K] @ [..., K, P]``; leading axes must be equal."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g)

    return _wrap(ad @ bd, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x[..., K] @ w[K, P] (+ b[P])`` with the weight shared over leading axes."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    wd = w.data
    y = x2 @ wd
    if b is not None:
        y += b.data

    def back(g):
        g2 = g.reshape(-1, wd.shape[1])
        gx = (g2 @ wd.T).reshape(*lead, wd.shape[0])
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if b is not None else None
        return (gx, gw, gb)

    inputs = (x, w, b) if b is not None else (x, w)
    return _wrap(y.reshape(*lead, wd.shape[1]), inputs, back)


# ---------------------------------------------------------------- normalisation / softmax

def softmax_lastdim(x: Tensor) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError("softmax_lastdim: non-finite input")
    y = kernels.softmax_fwd(x.data)
    return _wrap(y, (x,), lambda g: (kernels.softmax_bwd(y, g),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs last axis {d}")
    xd = x.data
    y, mean, rstd = kernels.layer_norm_fwd(xd, gamma.data, beta.data, eps)
    gd = gamma.data

    def back(g):
        return kernels.layer_norm_bwd(g, xd, gd, mean, rstd)

    return _wrap(y, (x, gamma, beta), back)


# ---------------------------------------------------------------- layout

def reshape(x: Tensor, shape) -> Tensor:
    try:
        y = x.data.reshape(tuple(int(s) for s in shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} ({x.size} elements) as {tuple(shape)}") from None
    old = x.shape
    return _wrap(y, (x,), lambda g: (g.reshape(old),))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inv = tuple(np.argsort(axes))
    return _wrap(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def permute_reshape(x: Tensor, axes, new_shape) -> Tensor:
    return reshape(permute(x, axes), new_shape)


def transpose(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return permute(x, axes)


def flatten(x: Tensor, start: int = 0, end: int = 1) -> Tensor:
    shape = x.shape
    end = end % x.ndim
    merged = math.prod(shape[start : end + 1])
    return reshape(x, shape[:start] + (merged,) + shape[end + 1 :])


def expand_leading(x: Tensor, n: int) -> Tensor:
    """Tile ``x`` along a new leading axis of length ``n``; gradient sums over it."""
    y = np.broadcast_to(x.data, (n,) + x.shape).copy()
    return _wrap(y, (x,), lambda g: (g.sum(axis=0),))
