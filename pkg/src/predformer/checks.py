"""Finite-difference checks over every layer type plus a tiny end-to-end model, in float64."""
from __future__ import annotations

import numpy as np

from .gradcheck import GradCheckReport, grad_check
from .model import ModelConfig, VariantSpec, init_model, model_forward
from .nn import (
    EVAL,
    gtb_forward,
    init_attention,
    init_gtb,
    init_mlp,
    init_swiglu,
    mhsa,
    mlp_ffn,
    named_tensors,
    swiglu_ffn,
)
from .tensor import Tensor, gelu, layer_norm, linear, matmul, mul_const, silu, softmax_lastdim, sum_all
from .train import l2_loss

F64 = np.float64


def _weighted(rng, shape):
    """Scalar probe ``sum(out * R)`` with a fixed random ``R``."""
    r = rng.standard_normal(shape)
    return lambda out: sum_all(mul_const(out, r))


def _t(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _jitter(rng, tensors, scale=0.3):
    # move parameters away from the ones/zeros init so every path carries signal
    for t in tensors:
        t.data = t.data + rng.normal(0.0, scale, t.shape)
    return tensors


def tiny_model_config() -> ModelConfig:
    """T=2, 4x4 frames with 2x2 patches (N=4), D=8, one binary_ts layer."""
    return ModelConfig(T=2, T_out=2, C=1, H=4, W=4, patch=2, dim=8, heads=2, hidden=16,
                       variant=VariantSpec("binary_ts", 1))


def run_gradchecks(tol: float = 1e-4, seed: int = 0, h: float = 1e-5) -> list[GradCheckReport]:
    rng = np.random.default_rng(seed)
    out = []

    def check(name, f, xs):
        out.append(grad_check(f, xs, h=h, tol=tol, name=name))

    x = _t(rng, 3, 5, 7)
    probe = _weighted(rng, (3, 5, 7))
    check("softmax", lambda a: probe(softmax_lastdim(a)), x)

    x, g, b = _t(rng, 4, 6), _t(rng, 6), _t(rng, 6)
    probe = _weighted(rng, (4, 6))
    check("layer_norm", lambda a, gg, bb: probe(layer_norm(a, gg, bb)), [x, g, b])

    x = _t(rng, 5, 6, scale=3.0)
    probe = _weighted(rng, (5, 6))
    check("silu", lambda a: probe(silu(a)), x)

    x = _t(rng, 5, 6, scale=2.0)
    probe = _weighted(rng, (5, 6))
    check("gelu", lambda a: probe(gelu(a)), x)

    x, w, b = _t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 5)
    probe = _weighted(rng, (2, 3, 5))
    check("linear", lambda a, ww, bb: probe(linear(a, ww, bb)), [x, w, b])

    a, c = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
    probe = _weighted(rng, (2, 3, 5))
    check("matmul", lambda p, q: probe(matmul(p, q)), [a, c])

    ap = init_attention(rng, 8, 2, F64)
    ps = _jitter(rng, [ap.wq, ap.bq, ap.wk, ap.bk, ap.wv, ap.bv, ap.wo, ap.bo], 0.5)
    x = _t(rng, 2, 5, 8)
    probe = _weighted(rng, (2, 5, 8))
    check("mhsa", lambda xx, *_: probe(mhsa(xx, ap, EVAL)), [x] + ps)

    sp = init_swiglu(rng, 8, 12, F64)
    ps = _jitter(rng, [sp.w, sp.b, sp.v, sp.c, sp.w_out, sp.b_out], 0.5)
    x = _t(rng, 2, 3, 8)
    probe = _weighted(rng, (2, 3, 8))
    check("swiglu_ffn", lambda xx, *_: probe(swiglu_ffn(xx, sp, EVAL)), [x] + ps)

    mp = init_mlp(rng, 8, 12, F64)
    ps = _jitter(rng, [mp.w1, mp.b1, mp.w2, mp.b2], 0.5)
    x = _t(rng, 2, 3, 8)
    probe = _weighted(rng, (2, 3, 8))
    check("mlp_ffn", lambda xx, *_: probe(mlp_ffn(xx, mp, EVAL)), [x] + ps)

    gp = init_gtb(rng, 8, 2, 16, "swiglu", F64)
    ps = _jitter(rng, [t for _, t in named_tensors(gp)])
    x = _t(rng, 2, 4, 8)
    probe = _weighted(rng, (2, 4, 8))
    check("gtb_forward", lambda xx, *_: probe(gtb_forward(xx, gp, EVAL)), [x] + ps)

    cfg = tiny_model_config()
    params = init_model(cfg, rng, F64)
    ps = _jitter(rng, params.tensors())
    frames = rng.random((2, cfg.T, cfg.C, cfg.H, cfg.W))
    target = rng.random((2, cfg.T_out, cfg.C, cfg.H, cfg.W))
    check("end_to_end", lambda *_: l2_loss(model_forward(frames, cfg, params), target), ps)
    return out
