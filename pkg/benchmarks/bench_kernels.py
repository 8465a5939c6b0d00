"""Time the row kernels and a full training step under each available backend.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""
import argparse
import json
import statistics
import time

import numpy as np

from predformer import kernels
from predformer.data import ShapeSpec, gen_moving_shapes, split_context_target
from predformer.presets import desk
from predformer.train import TrainConfig, Trainer


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(mod, rng):
    # shapes seen in the desk model: attention rows of length 64 and token rows of width 128
    scores = rng.standard_normal((4 * 8 * 10 * 16, 16)).astype(np.float32)
    att = rng.standard_normal((4 * 8 * 64, 640)).astype(np.float32)
    tok = rng.standard_normal((4 * 10 * 64, 128)).astype(np.float32)
    hid = rng.standard_normal((4 * 10 * 64 * 512,)).astype(np.float32)
    g_att = rng.standard_normal(att.shape).astype(np.float32)
    g_tok = rng.standard_normal(tok.shape).astype(np.float32)
    g_hid = rng.standard_normal(hid.shape).astype(np.float32)
    gamma = np.ones(128, np.float32)
    beta = np.zeros(128, np.float32)
    y_att = mod.softmax_fwd(att)
    _, mean, rstd = mod.layer_norm_fwd(tok, gamma, beta, 1e-5)
    return {
        "softmax_fwd[small rows]": lambda: mod.softmax_fwd(scores),
        "softmax_fwd[640]": lambda: mod.softmax_fwd(att),
        "softmax_bwd[640]": lambda: mod.softmax_bwd(y_att, g_att),
        "layer_norm_fwd[128]": lambda: mod.layer_norm_fwd(tok, gamma, beta, 1e-5),
        "layer_norm_bwd[128]": lambda: mod.layer_norm_bwd(g_tok, tok, gamma, mean, rstd),
        "silu_fwd": lambda: mod.silu_fwd(hid),
        "silu_bwd": lambda: mod.silu_bwd(hid, g_hid),
    }


def train_step_time(repeat):
    b = gen_moving_shapes(ShapeSpec(seed=0), 4, 20)
    ctx, tgt = split_context_target(b)
    tr = Trainer(desk("binary_ts", 2), TrainConfig(epochs=10_000, batch_size=4), ctx, tgt)
    return best_of(lambda: tr.step(ctx, tgt), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    results = {}
    for name in backends:
        mod = kernels.get_backend_module(name)
        results[name] = {k: best_of(f, args.repeat) for k, f in kernel_cases(mod, rng).items()}
        prev = kernels.use_backend(name)
        results[name]["train_step[desk binary_ts x2, B=4]"] = train_step_time(max(3, args.repeat // 4))
        kernels.use_backend(prev)

    cases = list(results[backends[0]])
    head = f"{'case':<38}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    print(head)
    for c in cases:
        row = f"{c:<38}" + "".join(f"{results[b][c] * 1e3:>14.3f}" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][c] / results['cython'][c]:>9.2f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
