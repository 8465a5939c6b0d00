"""One test per acceptance criterion; each prints a PASS/FAIL line (also collected in the summary)."""
import contextlib
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from predformer import presets, tensorfile
from predformer.checks import run_gradchecks
from predformer.cli import main
from predformer.cost import count_params, estimate_flops
from predformer.data import ShapeSpec, gen_moving_shapes, split_context_target
from predformer.metrics import fps_bench
from predformer.model import (
    VARIANTS,
    ModelConfig,
    VariantSpec,
    encoder_forward,
    init_model,
    spatial_pass,
    temporal_pass,
)
from predformer.nn import EVAL, named_tensors
from predformer.checkpoint import load_checkpoint, save_checkpoint
from predformer.tensor import Tensor
from predformer.train import TrainConfig, Trainer


@contextlib.contextmanager
def criterion(num, title):
    t0 = time.perf_counter()
    detail = []
    try:
        yield detail
    except BaseException:
        line = f"[{num}] FAIL  {title}  ({time.perf_counter() - t0:.1f}s) {'; '.join(detail)}"
        ACCEPTANCE[num] = line
        print(line)
        raise
    line = f"[{num}] PASS  {title}  ({time.perf_counter() - t0:.1f}s) {'; '.join(detail)}"
    ACCEPTANCE[num] = line
    print(line)


def test_1_parameter_counts():
    cases = [
        ("moving_mnist 24 GTB", presets.moving_mnist("quad_tsst"), 25.3),
        ("human36m 12 GTB", presets.human36m("quad_tsst"), 12.7),
        ("taxibj 8 GTB", presets.taxibj("quad_tsst"), 8.4),
        ("taxibj triplet 6 GTB", presets.taxibj("triplet_tst"), 6.3),
        ("weatherbench 8 GTB", presets.weatherbench("quad_tsst"), 5.3),
        ("weatherbench triplet 6 GTB", presets.weatherbench("triplet_tst"), 4.0),
    ]
    with criterion(1, "parameter counts within 2%") as detail:
        t0 = time.perf_counter()
        for name, cfg, want in cases:
            got = count_params(cfg) / 1e6
            detail.append(f"{name} {got:.2f}M/{want}M")
            assert got == pytest.approx(want, rel=0.02), name
        assert time.perf_counter() - t0 < 1.0


def test_2_flop_counts():
    cases = [
        ("mmnist fac_ts", presets.moving_mnist("fac_ts"), 16.5, 0.05),
        ("mmnist fac_st", presets.moving_mnist("fac_st"), 16.5, 0.05),
        ("mmnist full", presets.moving_mnist("full_attention"), 21.2, 0.05),
        ("mmnist triplet_tst", presets.moving_mnist("triplet_tst"), 16.4, 0.05),
        ("weatherbench fac_ts", presets.weatherbench("fac_ts"), 8.5, 0.10),
        ("weatherbench fac_st", presets.weatherbench("fac_st"), 8.5, 0.10),
    ]
    with criterion(2, "FLOPs (MAC=1) within tolerance") as detail:
        t0 = time.perf_counter()
        for name, cfg, want, rel in cases:
            got = estimate_flops(cfg) / 1e9
            detail.append(f"{name} {got:.2f}G/{want}G")
            assert got == pytest.approx(want, rel=rel), name
        assert time.perf_counter() - t0 < 1.0


def test_3_gradient_check():
    with criterion(3, "gradcheck at tol 1e-4 (f64, h=1e-5)") as detail:
        reports = run_gradchecks(tol=1e-4)
        needed = {"softmax", "layer_norm", "silu", "mhsa", "swiglu_ffn", "gtb_forward", "end_to_end"}
        assert needed <= {r.name for r in reports}
        worst = max(reports, key=lambda r: r.max_rel_error)
        detail.append(f"{len(reports)} checks, worst {worst.name} {worst.max_rel_error:.1e}")
        assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]
        assert main(["gradcheck"]) == 0


def _jitter(rng, obj, scale=0.3):
    for _, t in named_tensors(obj):
        t.data = t.data + rng.normal(0, scale, t.shape)
    return obj


def test_4_variant_suite():
    rng = np.random.default_rng(0)
    with criterion(4, "nine variants: shapes, locality, full(T=1) == spatial") as detail:
        t0 = time.perf_counter()
        base = dict(T=3, T_out=3, C=1, H=8, W=8, patch=4, dim=8, heads=2, hidden=16)
        for kind in VARIANTS:
            cfg = ModelConfig(**base, variant=VariantSpec(kind, 1))
            params = _jitter(rng, init_model(cfg, rng, np.float64))
            x = rng.standard_normal((2, 3, 4, 8))
            assert encoder_forward(Tensor(x), cfg, params.blocks).shape == (2, 3, 4, 8), kind
        detail.append("9 shapes ok")

        cfg = ModelConfig(**base, variant=VariantSpec("binary_ts", 1))
        blk_t, blk_s = _jitter(rng, init_model(cfg, rng, np.float64)).blocks
        x = rng.standard_normal((1, 4, 5, 8))
        x2 = x.copy()
        x2[0, 1, 3] += rng.standard_normal(8)
        s0, s1 = spatial_pass(Tensor(x), blk_s, EVAL).data, spatial_pass(Tensor(x2), blk_s, EVAL).data
        assert np.array_equal(s0[0, [0, 2, 3]], s1[0, [0, 2, 3]])
        assert (np.abs(s1[0, 1] - s0[0, 1]).max(-1) > 1e-9).all()
        t0_, t1_ = temporal_pass(Tensor(x), blk_t, EVAL).data, temporal_pass(Tensor(x2), blk_t, EVAL).data
        assert np.array_equal(t0_[0, :, [0, 1, 2, 4]], t1_[0, :, [0, 1, 2, 4]])
        assert (np.abs(t1_[0, :, 3] - t0_[0, :, 3]).max(-1) > 1e-9).all()
        detail.append("locality ok")

        cfg_f = ModelConfig(**{**base, "T": 1, "T_out": 1}, variant=VariantSpec("full_attention", 3))
        params = _jitter(rng, init_model(cfg_f, rng, np.float64))
        x = Tensor(rng.standard_normal((2, 1, 4, 8)))
        y = x
        for i, blk in enumerate(params.blocks):
            y = spatial_pass(y, blk, EVAL, None, i, 3)
        err = np.abs(encoder_forward(x, cfg_f, params.blocks).data - y.data).max()
        detail.append(f"full(T=1) vs spatial max diff {err:.1e}")
        assert err <= 1e-5
        assert time.perf_counter() - t0 < 60


def _overfit_data(seed=0):
    b = gen_moving_shapes(ShapeSpec(seed=seed), 4, 20)
    return split_context_target(b)


@pytest.mark.slow
def test_5_overfit_convergence():
    with criterion(5, "overfit binary_ts x2 D=128, 4 seqs: loss < 1e-3 within 2000 steps") as detail:
        t0 = time.perf_counter()
        ctx, tgt = _overfit_data()
        cfg = presets.desk("binary_ts", 2)
        tcfg = TrainConfig(lr_max=presets.learning_rate("desk"), epochs=2000, batch_size=4, seed=0)
        tr = Trainer(cfg, tcfg, ctx, tgt)
        hit = None
        for step in range(2000):
            tr.train_epoch()
            if tr.history["loss"][-1] < 1e-3:
                hit = step + 1
                break
        detail.append(f"reached {tr.history['loss'][-1]:.2e} at step {hit}")
        assert hit is not None
        # determinism: an independent run reproduces the first 50 losses bitwise
        again = Trainer(cfg, tcfg, ctx, tgt)
        for _ in range(50):
            again.train_epoch()
        assert again.history["loss"] == tr.history["loss"][:50]
        detail.append(f"wall {time.perf_counter() - t0:.0f}s")
        assert time.perf_counter() - t0 < 600


def test_6_reproducibility_and_persistence(tmp_path):
    with criterion(6, "bitwise seeds, resume, tensor files") as detail:
        cfg = ModelConfig(T=2, T_out=2, C=1, H=16, W=16, patch=4, dim=16, heads=2, hidden=32,
                          variant=VariantSpec("quad_tsst", 1), drop=presets.taxibj().drop)
        b = gen_moving_shapes(ShapeSpec(H=16, W=16, size_min=3, size_max=4, seed=2), 4, 4)
        ctx, tgt = split_context_target(b)
        tcfg = TrainConfig(epochs=4, batch_size=2, seed=2)

        runs = []
        for _ in range(2):
            tr = Trainer(cfg, tcfg, ctx, tgt)
            for _ in range(4):
                tr.train_epoch()
            runs.append(tr)
        assert runs[0].history["loss"] == runs[1].history["loss"]
        detail.append("seeded traces equal")

        part = Trainer(cfg, tcfg, ctx, tgt)
        part.train_epoch()
        part.train_epoch()
        save_checkpoint(tmp_path / "c.pfck", part)
        resumed = load_checkpoint(tmp_path / "c.pfck", expect=cfg).restore(ctx, tgt)
        resumed.train_epoch()
        resumed.train_epoch()
        assert resumed.history["loss"] == runs[0].history["loss"]
        assert all(a.data.tobytes() == b.data.tobytes() for a, b in zip(resumed.tensors, runs[0].tensors))
        detail.append("resume trace-identical")

        for i, dtype in enumerate((np.float32, np.float64)):
            for ndim in range(1, 6):
                a = np.random.default_rng(ndim).standard_normal((2, 3, 1, 4, 5)[:ndim]).astype(dtype)
                p = tmp_path / f"t{i}{ndim}.pfts"
                tensorfile.save_tensor(p, a)
                assert tensorfile.load_tensor(p).data.tobytes() == a.tobytes()
        detail.append("pfts round trips bitwise")


@pytest.mark.slow
def test_7_throughput_ordering():
    with criterion(7, "fps: every non-full variant faster than full attention (analog config)") as detail:
        fps = {}
        for kind in VARIANTS:
            cfg = presets.moving_mnist_analog(kind)
            params = init_model(cfg, np.random.default_rng(0))
            fps[kind] = fps_bench(params, cfg, batch=1, warmup_iters=3, timed_iters=10).fps
        detail.append(" ".join(f"{k}={v:.0f}" for k, v in fps.items()))
        full = fps.pop("full_attention")
        slower = [k for k, v in fps.items() if v <= full]
        assert not slower, slower


def test_8_accuracy_columns_not_reproducible():
    # Not a measurable criterion: the accuracy tables need the real datasets and long GPU
    # training. What stands in for them is criteria 3-5 and scripts/compare_variants.py.
    line = ("[8] N/A   accuracy columns (MSE/MAE/SSIM/PSNR tables) are not reproducible at desk scale; "
            "covered by criteria 3-5 and scripts/compare_variants.py (informational)")
    ACCEPTANCE[8] = line
    print(line)
