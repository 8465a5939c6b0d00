import dataclasses

import numpy as np
import pytest

from predformer.errors import ConfigError
from predformer.nn import (
    EVAL,
    DropSpec,
    drop_path,
    drop_path_prob,
    dropout,
    gtb_forward,
    init_attention,
    init_gtb,
    init_swiglu,
    mhsa,
    mlp_hidden,
    named_tensors,
    swiglu_ffn,
    trunc_normal,
)
from predformer.tensor import Tensor


def _jitter(rng, obj, scale=0.5):
    for _, t in named_tensors(obj):
        t.data = t.data + rng.normal(0, scale, t.shape)
    return obj


def oracle_attention(x, p):
    """Independent f64 multi-head attention via einsum."""
    d = x.shape[-1]
    h = p.heads
    dh = d // h
    q = (x @ p.wq.data + p.bq.data).reshape(*x.shape[:-1], h, dh)
    k = (x @ p.wk.data + p.bk.data).reshape(*x.shape[:-1], h, dh)
    v = (x @ p.wv.data + p.bv.data).reshape(*x.shape[:-1], h, dh)
    s = np.einsum("gqhd,gkhd->ghqk", q, k) / np.sqrt(dh)
    s = np.exp(s - s.max(-1, keepdims=True))
    a = s / s.sum(-1, keepdims=True)
    ctx = np.einsum("ghqk,gkhd->gqhd", a, v).reshape(x.shape)
    return ctx @ p.wo.data + p.bo.data


def oracle_ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


def oracle_swiglu(x, p):
    a = x @ p.w.data + p.b.data
    return (a / (1 + np.exp(-a)) * (x @ p.v.data + p.c.data)) @ p.w_out.data + p.b_out.data


def test_mhsa_matches_einsum_oracle(rng, backend):
    p = _jitter(rng, init_attention(rng, 16, 4, np.float64))
    x = rng.standard_normal((3, 7, 16))
    np.testing.assert_allclose(mhsa(Tensor(x), p).data, oracle_attention(x, p), rtol=1e-10, atol=1e-12)


def test_mhsa_accepts_unbatched_tokens(rng):
    p = _jitter(rng, init_attention(rng, 8, 2, np.float64))
    x = rng.standard_normal((5, 8))
    np.testing.assert_allclose(mhsa(Tensor(x), p).data, oracle_attention(x[None], p)[0], rtol=1e-10)


def test_mhsa_is_permutation_equivariant(rng):
    p = _jitter(rng, init_attention(rng, 8, 2, np.float64))
    x = rng.standard_normal((1, 6, 8))
    perm = rng.permutation(6)
    y = mhsa(Tensor(x), p).data
    np.testing.assert_allclose(mhsa(Tensor(x[:, perm]), p).data, y[:, perm], rtol=1e-10)


def test_heads_must_divide_dim(rng):
    with pytest.raises(ConfigError):
        init_attention(rng, 10, 3)


def test_swiglu_matches_formula(rng, backend):
    p = _jitter(rng, init_swiglu(rng, 8, 20, np.float64))
    x = rng.standard_normal((2, 5, 8))
    np.testing.assert_allclose(swiglu_ffn(Tensor(x), p).data, oracle_swiglu(x, p), rtol=1e-10, atol=1e-12)


def test_gtb_matches_composed_oracle(rng, backend):
    p = _jitter(rng, init_gtb(rng, 8, 2, 16, dtype=np.float64))
    x = rng.standard_normal((2, 5, 8))
    y = x + oracle_attention(oracle_ln(x, p.ln1_g.data, p.ln1_b.data), p.attn)
    want = y + oracle_swiglu(oracle_ln(y, p.ln2_g.data, p.ln2_b.data), p.ffn)
    np.testing.assert_allclose(gtb_forward(Tensor(x), p).data, want, rtol=1e-9, atol=1e-11)


def test_gtb_with_zero_output_projections_is_identity(rng):
    p = init_gtb(rng, 8, 2, 16, dtype=np.float64)
    for t in (p.attn.wo, p.attn.bo, p.ffn.w_out, p.ffn.b_out):
        t.data = np.zeros_like(t.data)
    x = rng.standard_normal((2, 5, 8))
    np.testing.assert_array_equal(gtb_forward(Tensor(x), p).data, x)


def test_mlp_ffn_parameter_budget_matches_swiglu():
    d, h = 256, 1024
    m = mlp_hidden(h)
    assert abs((2 * d * m) - 3 * d * h) <= 2 * d


def test_trunc_normal_bounds_and_scale():
    a = trunc_normal(np.random.default_rng(0), (200, 200), std=0.02, dtype=np.float64)
    assert np.abs(a).max() <= 0.04
    # std of N(0,1) truncated at +-2 is 0.8796
    assert a.std() == pytest.approx(0.02 * 0.8796, rel=0.02)


def test_init_conventions(rng):
    p = init_gtb(rng, 16, 4, 32)
    np.testing.assert_array_equal(p.ln1_g.data, 1.0)
    np.testing.assert_array_equal(p.ln1_b.data, 0.0)
    np.testing.assert_array_equal(p.attn.bq.data, 0.0)
    assert p.attn.wq.dtype == np.float32


def test_dropspec_validation():
    with pytest.raises(ConfigError):
        DropSpec(attn_dropout=1.0)
    with pytest.raises(ConfigError):
        DropSpec(schedule="cubic")
    with pytest.raises(ConfigError):
        DropSpec(mode="infer")
    d = DropSpec(0.1, 0.2, 0.3)
    assert d.train().training and not d.train().eval().training
    with pytest.raises(dataclasses.FrozenInstanceError):
        d.attn_dropout = 0.5


def test_dropout_identity_in_eval_and_unbiased_in_train():
    x = Tensor(np.ones((400, 500)))
    assert dropout(x, 0.3, None, training=False) is x
    y = dropout(x, 0.3, np.random.default_rng(0), training=True).data
    assert set(np.unique(y).tolist()) <= {0.0, 1 / 0.7}
    assert y.mean() == pytest.approx(1.0, abs=0.01)
    assert (y == 0).mean() == pytest.approx(0.3, abs=0.01)
    x32 = Tensor(np.ones((3, 4), np.float32))
    assert dropout(x32, 0.3, np.random.default_rng(0), training=True).dtype == np.float32


def test_drop_path_prob_schedules():
    assert drop_path_prob(0.2, "uniform", 5, 8) == 0.2
    assert drop_path_prob(0.2, "linear", 0, 8) == 0.0
    assert drop_path_prob(0.2, "linear", 7, 8) == pytest.approx(0.2)
    assert drop_path_prob(0.2, "linear", 0, 1) == 0.0


def test_drop_path_drops_whole_rows():
    x = Tensor(np.ones((2000, 3, 4)))
    y = drop_path(x, 0.25, mode="train", rng=np.random.default_rng(0)).data
    per_row = y.reshape(2000, -1)
    # every row is either all zero or all 1/(1-p)
    assert np.all((per_row == 0).all(1) | np.isclose(per_row, 1 / 0.75).all(1))
    assert (per_row[:, 0] == 0).mean() == pytest.approx(0.25, abs=0.03)
    assert drop_path(x, 0.25, mode="eval") is x


def test_eval_mode_gtb_ignores_rng(rng):
    p = init_gtb(rng, 8, 2, 16, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 5, 8)))
    drop = DropSpec(0.5, 0.5, 0.5)
    a = gtb_forward(x, p, drop, np.random.default_rng(1)).data
    b = gtb_forward(x, p, EVAL).data
    np.testing.assert_array_equal(a, b)


def test_train_mode_is_stochastic_but_seeded(rng):
    p = init_gtb(rng, 8, 2, 16, dtype=np.float64)
    x = Tensor(rng.standard_normal((4, 5, 8)))
    drop = DropSpec(0.3, 0.3, 0.3, mode="train")
    a = gtb_forward(x, p, drop, np.random.default_rng(7)).data
    b = gtb_forward(x, p, drop, np.random.default_rng(7)).data
    c = gtb_forward(x, p, drop, np.random.default_rng(8)).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
