"""Train three encoder variants on the same synthetic data and compare held-out metrics.

Informational only: desk-scale numbers say nothing about the full benchmarks.

    python scripts/compare_variants.py [--epochs 20] [--variants fac_ts binary_ts quad_tsst]
"""
import argparse
import time

import numpy as np

from predformer.cost import count_params, estimate_flops
from predformer.data import ShapeSpec, gen_moving_shapes, split_context_target
from predformer.metrics import evaluate
from predformer.model import VariantSpec, model_forward
from predformer.presets import desk, learning_rate
from predformer.train import TrainConfig, Trainer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", nargs="+", default=["fac_ts", "binary_ts", "quad_tsst"])
    ap.add_argument("--gtbs", type=int, default=4, help="GTB budget shared by every variant")
    ap.add_argument("--train", type=int, default=64, help="training sequences")
    ap.add_argument("--val", type=int, default=16, help="held-out sequences")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    batch = gen_moving_shapes(ShapeSpec(seed=args.seed), args.train + args.val, 20)
    ctx, tgt = split_context_target(batch)
    print(f"{'variant':<14}{'GTBs':>5}{'params(M)':>11}{'flops(G)':>10}{'train mse':>12}"
          f"{'val mse':>12}{'val ssim':>10}{'secs':>8}")
    for kind in args.variants:
        cfg = desk(kind).replace(variant=VariantSpec.for_blocks(kind, args.gtbs))
        tcfg = TrainConfig(lr_max=learning_rate("desk"), epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
        tr = Trainer(cfg, tcfg, ctx[:args.train], tgt[:args.train])
        t0 = time.perf_counter()
        for _ in range(args.epochs):
            stats = tr.train_epoch()
        pred = np.concatenate([
            model_forward(ctx[i:i + args.batch_size], cfg, tr.params).data
            for i in range(args.train, args.train + args.val, args.batch_size)
        ])
        rep = evaluate(pred, tgt[args.train:])
        print(f"{kind:<14}{cfg.variant.total_gtbs:>5}{count_params(cfg) / 1e6:>11.3f}"
              f"{estimate_flops(cfg) / 1e9:>10.3f}{stats.loss_mean:>12.5f}{rep.mse:>12.5f}"
              f"{rep.ssim:>10.4f}{time.perf_counter() - t0:>8.1f}", flush=True)


if __name__ == "__main__":
    main()
