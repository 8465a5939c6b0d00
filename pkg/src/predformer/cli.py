"""``predformer`` command line: gen-data, train, eval, bench, gradcheck.

Exit codes: 0 success, 1 check or validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import tensorfile
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, parse_override, read_ini, resolve
from .cost import count_params
from .data import SequenceBatch, gen_moving_shapes, split_context_target
from .errors import ConfigError
from .metrics import emit_report, evaluate, fps_bench, report_row
from .model import VARIANTS, VariantSpec, init_model
from .train import Trainer, TrainingDivergedError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CHECKPOINT = "checkpoint.pfck"


class CheckFailed(Exception):
    """A validation or check failure (exit code 1)."""


# flag dest -> config key it overrides
_FLAG_KEYS = {
    "preset": ("model", "preset"),
    "variant": ("model", "variant"),
    "layers": ("model", "layers"),
    "gtb_blocks": ("model", "gtb_blocks"),
    "epochs": ("training", "epochs"),
    "lr": ("training", "learning_rate"),
    "batch_size": ("training", "batch_size"),
    "scheduler": ("training", "scheduler"),
    "count": ("data", "count"),
    "val_count": ("data", "val_count"),
    "seed": ("run", "seed"),
    "dtype": ("run", "dtype"),
}


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--seed", type=int, help="run seed (data, init and dropout streams derive from it)")
    g.add_argument("--out", default="run", help="output directory (default: ./run)")
    g.add_argument("--force", action="store_true", help="overwrite existing outputs")
    g.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    g.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; may repeat")
    g.add_argument("--preset", help="model preset to start from")
    g.add_argument("--variant", choices=VARIANTS, help="encoder variant")
    g.add_argument("--layers", type=int, help="number of variant layers")
    g.add_argument("--gtb-blocks", dest="gtb_blocks", type=int, help="total GTB budget (sets layers)")
    g.add_argument("--dtype", choices=("float32", "float64"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="predformer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic train/val sequences")
    _common(p)
    p.add_argument("--count", type=int, help="training sequences")
    p.add_argument("--val-count", dest="val_count", type=int, help="validation sequences")

    p = sub.add_parser("train", help="train a model")
    _common(p)
    p.add_argument("--data", help="directory written by gen-data (default: generate in memory)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--scheduler", choices=("onecycle", "cosine"))
    p.add_argument("--count", type=int, help="training sequences when generating in memory")
    p.add_argument("--stop-after", dest="stop_after", type=int,
                   help="checkpoint and exit after this epoch (the schedule still spans --epochs)")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", help=f"checkpoint path (default: OUT/{CHECKPOINT})")
    p.add_argument("--data", help="directory written by gen-data (default: regenerate from the run config)")
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dump-predictions", action="store_true", help="write one .pfts file per batch")
    p.add_argument("--pgm", action="store_true", help="also write a context/target/prediction grid image")

    p = sub.add_parser("bench", help="parameter, FLOP and throughput table")
    _common(p)
    p.add_argument("--all-variants", action="store_true", help="one row per variant at an equal GTB budget")
    p.add_argument("--no-fps", action="store_true", help="skip throughput timing")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--iters", type=int, default=10)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer type")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    return ap


def run_config(args) -> RunConfig:
    file_values = read_ini(args.config) if args.config else None
    overrides = [parse_override(s) for s in args.set]
    for dest, (section, key) in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            overrides.append((section, key, str(v)))
    return resolve(file_values, overrides)


def _out_dir(args, guard: list[str]) -> Path:
    out = Path(args.out)
    existing = [g for g in guard if (out / g).exists()]
    if existing and not (args.force or getattr(args, "resume", False)):
        raise CheckFailed(f"{out} already holds {', '.join(existing)}; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(rc: RunConfig, out: Path) -> None:
    (out / "config.ini").write_text(rc.to_ini())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- gen-data

def cmd_gen_data(args) -> int:
    rc = run_config(args)
    rc.check_data()
    out = _out_dir(args, ["train.pfts", "val.pfts", "manifest.json"])
    total = rc.count + rc.val_count
    batch = gen_moving_shapes(rc.data, total, rc.frames_total, rc.model.T)
    files = {"train": out / "train.pfts"}
    tensorfile.save_tensor(files["train"], batch.frames[:rc.count])
    if rc.val_count:
        files["val"] = out / "val.pfts"
        tensorfile.save_tensor(files["val"], batch.frames[rc.count:])
    manifest = {
        "spec": rc.data.to_dict(),
        "count": rc.count,
        "val_count": rc.val_count,
        "frames_total": rc.frames_total,
        "T": batch.T,
        "T_prime": batch.T_prime,
        "shape": [rc.frames_total, 1, rc.data.H, rc.data.W],
        "files": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in files.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _echo_config(rc, out)
    print(f"wrote {rc.count} train / {rc.val_count} val sequences of {rc.frames_total} frames "
          f"({rc.data.H}x{rc.data.W}) to {out}")
    return EXIT_OK


def _load_split(data_dir: str, split: str, rc: RunConfig) -> SequenceBatch:
    d = Path(data_dir)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        entry = manifest["files"][split]
    except (OSError, KeyError, ValueError) as e:
        raise CheckFailed(f"{d}: no usable manifest entry for split {split!r} ({e})") from None
    frames = tensorfile.load_tensor(d / entry["path"]).data
    want = (rc.model.T + rc.model.T_out, rc.model.C, rc.model.H, rc.model.W)
    if frames.ndim != 5 or frames.shape[1:] != want:
        raise CheckFailed(f"data frames {frames.shape[1:]} do not match the model's [T+T', C, H, W] = {want}")
    return SequenceBatch(frames, manifest["T"], manifest["T_prime"])


def _dataset(args, rc: RunConfig, split: str) -> SequenceBatch:
    if getattr(args, "data", None):
        return _load_split(args.data, split, rc)
    rc.check_data()
    batch = gen_moving_shapes(rc.data, rc.count + rc.val_count, rc.frames_total, rc.model.T)
    frames = batch.frames[:rc.count] if split == "train" else batch.frames[rc.count:]
    if frames.shape[0] == 0:
        raise CheckFailed(f"split {split!r} is empty (data.val_count = 0)")
    return SequenceBatch(frames, batch.T, batch.T_prime)


# ---------------------------------------------------------------- train

def _write_log(tr: Trainer, path: Path) -> None:
    spe = tr.steps_per_epoch
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "epoch", "loss", "lr"])
        for i, (loss, lr) in enumerate(zip(tr.history["loss"], tr.history["lr"])):
            w.writerow([i + 1, i // spe + 1, repr(loss), repr(lr)])


def cmd_train(args) -> int:
    rc = run_config(args)
    out = _out_dir(args, [CHECKPOINT, "train_log.csv"])
    ckpt_path = out / CHECKPOINT
    ctx, tgt = split_context_target(_dataset(args, rc, "train"))
    if args.resume:
        if not ckpt_path.exists():
            raise CheckFailed(f"--resume given but {ckpt_path} does not exist")
        ck = load_checkpoint(ckpt_path, expect=rc.model)
        if ck.train_cfg != rc.train:
            raise CheckFailed("training config differs from the checkpoint's; resume needs identical settings")
        tr = ck.restore(ctx, tgt)
        print(f"resumed at epoch {tr.epoch}, step {tr.state.step}")
    else:
        tr = Trainer(rc.model, rc.train, ctx, tgt, dtype=rc.dtype)
    _echo_config(rc, out)
    print(f"variant {rc.model.variant.kind} x{rc.model.variant.layers} = {rc.model.variant.total_gtbs} GTBs, "
          f"{count_params(rc.model):,} params, {tr.total_steps} steps")
    stop = rc.train.epochs if args.stop_after is None else min(args.stop_after, rc.train.epochs)
    while tr.epoch < stop:
        stats = tr.train_epoch()
        print(f"epoch {tr.epoch:4d}  loss {stats.loss_mean:.6e}  lr {stats.lr_trace[-1]:.3e}  "
              f"{stats.wall_time:.2f}s", flush=True)
        if tr.epoch % rc.checkpoint_every == 0 or tr.epoch == stop:
            save_checkpoint(ckpt_path, tr)
            _write_log(tr, out / "train_log.csv")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def write_pgm(path: Path, rows: list[np.ndarray]) -> None:
    """Binary 8-bit PGM of frame strips stacked vertically; each row is ``[T, H, W]``."""
    strips = [np.concatenate(list(r), axis=1) for r in rows]
    img = np.clip(np.concatenate(strips, axis=0), 0.0, 1.0)
    px = np.round(img * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode())
        fh.write(px.tobytes())


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint) if args.checkpoint else Path(args.out) / CHECKPOINT
    ck = load_checkpoint(ckpt_path)
    echoed = Path(args.out) / "config.ini"
    if not args.config and echoed.exists():
        args.config = str(echoed)
    rc = run_config(args)
    # the model is defined by the checkpoint; file/flag model keys must agree with it when given
    if args.config or args.variant or args.layers or args.gtb_blocks or args.preset:
        if rc.model != ck.model_cfg:
            raise CheckFailed("model config differs from the checkpoint's")
    rc.model = ck.model_cfg
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    batch = _dataset(args, rc, args.split)
    ctx, tgt = split_context_target(batch)
    bs = args.batch_size or ck.train_cfg.batch_size
    dtype = ck.params.embed_w.dtype
    preds = []
    from .model import model_forward

    for i, s in enumerate(range(0, ctx.shape[0], bs)):
        p = model_forward(ctx[s:s + bs].astype(dtype), ck.model_cfg, ck.params).data
        preds.append(p)
        if args.dump_predictions:
            tensorfile.save_tensor(out / f"pred_{i:04d}.pfts", p)
    pred = np.concatenate(preds, axis=0)
    report = evaluate(pred, tgt, ck.model_cfg.to_dict())
    row = report_row(ckpt_path.stem, ck.model_cfg, report)
    emit_report(row, out / "metrics.csv", "csv")
    emit_report(row, out / "metrics.jsonl", "jsonl")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if args.pgm:
        n = min(4, pred.shape[0])
        rows = []
        for k in range(n):
            rows += [ctx[k, :, 0], tgt[k, :, 0], pred[k, :, 0]]
        write_pgm(out / "predictions.pgm", rows)
    print(f"mse {report.mse:.6e}  mae {report.mae:.6e}  rmse {report.rmse:.6e}  "
          f"ssim {report.ssim:.4f}  psnr {report.psnr:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    rc = run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [rc.model]
    if args.all_variants:
        budget = rc.model.variant.total_gtbs
        cfgs = [rc.model.replace(variant=VariantSpec.for_blocks(k, budget, rc.model.variant.layer_skip))
                for k in VARIANTS]
    rows = []
    print(f"{'variant':<16}{'layers':>7}{'GTBs':>6}{'params(M)':>11}{'flops(G)':>10}{'fps':>10}")
    for cfg in cfgs:
        bench = None
        if not args.no_fps:
            params = init_model(cfg, np.random.default_rng(rc.seed + 1), rc.dtype)
            bench = fps_bench(params, cfg, args.batch, args.warmup, args.iters)
        row = report_row(f"bench-{cfg.variant.kind}", cfg, bench=bench)
        rows.append(row)
        fps = f"{bench.fps:10.1f}" if bench else f"{'-':>10}"
        print(f"{cfg.variant.kind:<16}{cfg.variant.layers:>7}{cfg.variant.total_gtbs:>6}"
              f"{row['params'] / 1e6:>11.3f}{row['flops'] / 1e9:>10.3f}{fps}", flush=True)
    emit_report(rows, out / "bench.csv", "csv")
    _echo_config(rc, out)
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    from .checks import run_gradchecks

    reports = run_gradchecks(tol=args.tol, seed=args.seed)
    for r in reports:
        print(r.line())
    bad = [r.name for r in reports if not r.passed]
    if bad:
        print(f"FAILED: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    print(f"all {len(reports)} checks passed at tol {args.tol:g}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"predformer {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckFailed, CheckpointError, tensorfile.TensorFileError, TrainingDivergedError) as e:
        print(f"predformer {args.command}: {e}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as e:
        print(f"predformer {args.command}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
