"""Attention, gated feed-forward and the Gated Transformer Block (GTB).

All layers take a token tensor ``[G, L, D]`` (``G`` independent sequences of
``L`` tokens) or a bare ``[L, D]``; parameters live in small dataclasses so the
model can enumerate them by name.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .tensor import (
    Tensor,
    add,
    layer_norm,
    linear,
    matmul,
    mul,
    mul_const,
    permute,
    reshape,
    silu,
    gelu,
    softmax_lastdim,
)

LN_EPS = 1e-5


@dataclass(frozen=True)
class DropSpec:
    attn_dropout: float = 0.0
    ffn_dropout: float = 0.0
    drop_path_rate: float = 0.0
    schedule: str = "uniform"
    mode: str = "eval"

    def __post_init__(self):
        for name in ("attn_dropout", "ffn_dropout", "drop_path_rate"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {v}")
        if self.schedule not in ("uniform", "linear"):
            raise ConfigError(f"drop-path schedule must be 'uniform' or 'linear', got {self.schedule!r}")
        if self.mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {self.mode!r}")

    @property
    def training(self) -> bool:
        return self.mode == "train"

    def train(self) -> "DropSpec":
        return dataclasses.replace(self, mode="train")

    def eval(self) -> "DropSpec":
        return dataclasses.replace(self, mode="eval")


EVAL = DropSpec()


@dataclass
class AttentionParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    heads: int

    def __post_init__(self):
        dim = self.wq.shape[0]
        if self.heads < 1 or dim % self.heads:
            raise ConfigError(f"model dim {dim} is not divisible by {self.heads} heads")

    @property
    def head_dim(self) -> int:
        return self.wq.shape[0] // self.heads


@dataclass
class SwiGLUParams:
    w: Tensor
    b: Tensor
    v: Tensor
    c: Tensor
    w_out: Tensor
    b_out: Tensor

    def __post_init__(self):
        if self.w.shape != self.v.shape:
            raise ConfigError(f"gate and value weights differ: {self.w.shape} vs {self.v.shape}")


@dataclass
class MLPParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class GTBParams:
    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    ffn: SwiGLUParams | MLPParams


def named_tensors(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield ``(dotted_name, tensor)`` for every Tensor reachable from ``obj``."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_tensors(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}.{i}" if prefix else str(i))


# ---------------------------------------------------------------- initialisation

def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by resampling."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


def init_linear(rng, fan_in: int, fan_out: int, dtype=np.float32) -> tuple[Tensor, Tensor]:
    return _param(trunc_normal(rng, (fan_in, fan_out), dtype=dtype), dtype), _param(np.zeros(fan_out), dtype)


def init_layer_norm(dim: int, dtype=np.float32) -> tuple[Tensor, Tensor]:
    return _param(np.ones(dim), dtype), _param(np.zeros(dim), dtype)


def init_attention(rng, dim: int, heads: int, dtype=np.float32) -> AttentionParams:
    if heads < 1 or dim % heads:
        raise ConfigError(f"model dim {dim} is not divisible by {heads} heads")
    wq, bq = init_linear(rng, dim, dim, dtype)
    wk, bk = init_linear(rng, dim, dim, dtype)
    wv, bv = init_linear(rng, dim, dim, dtype)
    wo, bo = init_linear(rng, dim, dim, dtype)
    return AttentionParams(wq, bq, wk, bk, wv, bv, wo, bo, heads)


def init_swiglu(rng, dim: int, hidden: int, dtype=np.float32) -> SwiGLUParams:
    w, b = init_linear(rng, dim, hidden, dtype)
    v, c = init_linear(rng, dim, hidden, dtype)
    w_out, b_out = init_linear(rng, hidden, dim, dtype)
    return SwiGLUParams(w, b, v, c, w_out, b_out)


def mlp_hidden(swiglu_hidden: int) -> int:
    """MLP width with the same weight budget as a SwiGLU of ``swiglu_hidden``."""
    return (3 * swiglu_hidden) // 2


def init_mlp(rng, dim: int, hidden: int, dtype=np.float32) -> MLPParams:
    w1, b1 = init_linear(rng, dim, hidden, dtype)
    w2, b2 = init_linear(rng, hidden, dim, dtype)
    return MLPParams(w1, b1, w2, b2)


def init_gtb(rng, dim: int, heads: int, hidden: int, ffn_kind: str = "swiglu", dtype=np.float32) -> GTBParams:
    ln1_g, ln1_b = init_layer_norm(dim, dtype)
    attn = init_attention(rng, dim, heads, dtype)
    ln2_g, ln2_b = init_layer_norm(dim, dtype)
    if ffn_kind == "swiglu":
        ffn = init_swiglu(rng, dim, hidden, dtype)
    elif ffn_kind == "mlp":
        ffn = init_mlp(rng, dim, mlp_hidden(hidden), dtype)
    else:
        raise ConfigError(f"unknown ffn kind {ffn_kind!r}")
    return GTBParams(ln1_g, ln1_b, attn, ln2_g, ln2_b, ffn)


# ---------------------------------------------------------------- regularisers

def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    return mul_const(x, keep / (1.0 - p))


def drop_path_prob(rate: float, schedule: str, block_index: int, total_blocks: int) -> float:
    if schedule == "uniform":
        return rate
    if total_blocks <= 1:
        return 0.0
    return rate * block_index / (total_blocks - 1)


def drop_path(
    x: Tensor,
    rate: float,
    schedule: str = "uniform",
    block_index: int = 0,
    total_blocks: int = 1,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Stochastic depth on a residual branch, one Bernoulli draw per leading row."""
    p = drop_path_prob(rate, schedule, block_index, total_blocks)
    if mode != "train" or p == 0.0:
        return x
    keep = (rng.random(x.shape[0]) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    mask = np.broadcast_to(keep.reshape((-1,) + (1,) * (x.ndim - 1)), x.shape)
    return mul_const(x, mask)


# ---------------------------------------------------------------- layers

def _as_groups(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise ValueError(f"expected [G, L, D] or [L, D] tokens, got {x.shape}")
    return x, False


def mhsa(x: Tensor, p: AttentionParams, drop: DropSpec = EVAL, rng=None) -> Tensor:
    x3, squeeze = _as_groups(x)
    g, n, d = x3.shape
    if d != p.wq.shape[0]:
        raise ValueError(f"token dim {d} does not match attention dim {p.wq.shape[0]}")
    h = p.heads
    dh = d // h
    q = permute(reshape(linear(x3, p.wq, p.bq), (g, n, h, dh)), (0, 2, 1, 3))
    q = mul(q, 1.0 / math.sqrt(dh))
    kt = permute(reshape(linear(x3, p.wk, p.bk), (g, n, h, dh)), (0, 2, 3, 1))
    v = permute(reshape(linear(x3, p.wv, p.bv), (g, n, h, dh)), (0, 2, 1, 3))
    attn = softmax_lastdim(matmul(q, kt))
    attn = dropout(attn, drop.attn_dropout, rng, drop.training)
    ctx = reshape(permute(matmul(attn, v), (0, 2, 1, 3)), (g, n, d))
    out = linear(ctx, p.wo, p.bo)
    return reshape(out, (n, d)) if squeeze else out


def swiglu_ffn(x: Tensor, p: SwiGLUParams, drop: DropSpec = EVAL, rng=None) -> Tensor:
    gated = mul(silu(linear(x, p.w, p.b)), linear(x, p.v, p.c))
    gated = dropout(gated, drop.ffn_dropout, rng, drop.training)
    out = linear(gated, p.w_out, p.b_out)
    return dropout(out, drop.ffn_dropout, rng, drop.training)


def mlp_ffn(x: Tensor, p: MLPParams, drop: DropSpec = EVAL, rng=None) -> Tensor:
    hid = gelu(linear(x, p.w1, p.b1))
    hid = dropout(hid, drop.ffn_dropout, rng, drop.training)
    out = linear(hid, p.w2, p.b2)
    return dropout(out, drop.ffn_dropout, rng, drop.training)


def ffn_forward(x: Tensor, p, drop: DropSpec = EVAL, rng=None) -> Tensor:
    if isinstance(p, SwiGLUParams):
        return swiglu_ffn(x, p, drop, rng)
    return mlp_ffn(x, p, drop, rng)


def gtb_forward(
    z: Tensor,
    p: GTBParams,
    drop: DropSpec = EVAL,
    rng=None,
    block_index: int = 0,
    total_blocks: int = 1,
) -> Tensor:
    """Pre-LN residual attention followed by pre-LN residual feed-forward."""
    z3, squeeze = _as_groups(z)

    def branch(t):
        return drop_path(t, drop.drop_path_rate, drop.schedule, block_index, total_blocks, drop.mode, rng)

    y = add(z3, branch(mhsa(layer_norm(z3, p.ln1_g, p.ln1_b, LN_EPS), p.attn, drop, rng)))
    out = add(y, branch(ffn_forward(layer_norm(y, p.ln2_g, p.ln2_b, LN_EPS), p.ffn, drop, rng)))
    return reshape(out, z.shape) if squeeze else out
