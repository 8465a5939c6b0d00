"""Pixel errors, SSIM, PSNR, throughput timing and report files."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .tensor import ShapeError

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

REPORT_COLUMNS = ("run_id", "variant", "layers", "params", "flops", "fps", "mse", "mae", "rmse", "ssim", "psnr")
_INT_COLUMNS = {"layers", "params", "flops"}
_STR_COLUMNS = {"run_id", "variant"}


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    t = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    return p, t


def pixel_metrics(pred, target) -> tuple[float, float, float]:
    """``(mse, mae, rmse)`` over every element, accumulated in float64."""
    p, t = _pair(pred, target)
    d = p - t
    mse = float(np.mean(d * d))
    mae = float(np.mean(np.abs(d)))
    return mse, mae, math.sqrt(mse)


def psnr_from_mse(mse: float, data_range: float = 1.0) -> float:
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(data_range * data_range / mse))


def psnr(pred, target) -> float:
    return psnr_from_mse(pixel_metrics(pred, target)[0])


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of the last two axes with ``g`` (outer) ``g``."""
    k = g.size
    h, w = x.shape[-2:]
    rows = sum(g[i] * x[..., i:i + h - k + 1, :] for i in range(k))
    return sum(g[j] * rows[..., j:j + w - k + 1] for j in range(k))


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over the trailing ``[H, W]`` axes."""
    g = gaussian_window()
    if x.shape[-1] < g.size or x.shape[-2] < g.size:
        raise ShapeError(f"frame {x.shape[-2:]} is smaller than the {g.size}x{g.size} SSIM window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim_per_frame(pred, target) -> np.ndarray:
    """SSIM of every ``[H, W]`` plane, averaged over channels when a channel axis is present.

    Inputs of rank 2 are one frame, rank 3 ``[C, H, W]``, rank 4
    ``[T, C, H, W]`` and rank 5 ``[B, T, C, H, W]``; the result has the
    leading (non-channel) shape.
    """
    p, t = _pair(pred, target)
    if p.ndim < 2:
        raise ShapeError(f"need at least [H, W], got {p.shape}")
    per_plane = ssim_map(p, t).mean(axis=(-2, -1))
    if p.ndim >= 3:
        per_plane = per_plane.mean(axis=-1)
    return per_plane


def ssim(pred, target) -> float:
    """Mean SSIM: per frame (channels averaged), then over frames."""
    return float(np.mean(ssim_per_frame(pred, target)))


# ---------------------------------------------------------------- reports

def fingerprint(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricsReport:
    mse: float
    mae: float
    rmse: float
    ssim: float
    psnr: float
    per_frame: dict = field(default_factory=dict)
    config_fingerprint: str = ""
    timestamp: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, target, config=None) -> MetricsReport:
    """Metrics for ``[B, T, C, H, W]`` predictions, with per-time-step breakdown."""
    p, t = _pair(pred, target)
    if p.ndim != 5:
        raise ShapeError(f"expected [B, T, C, H, W], got {p.shape}")
    mse, mae, rmse = pixel_metrics(p, t)
    d = p - t
    frame_mse = np.mean(d * d, axis=(0, 2, 3, 4))
    frame_ssim = ssim_per_frame(p, t).mean(axis=0)
    per_frame = {
        "mse": frame_mse.tolist(),
        "mae": np.mean(np.abs(d), axis=(0, 2, 3, 4)).tolist(),
        "ssim": frame_ssim.tolist(),
        "psnr": [psnr_from_mse(float(m)) for m in frame_mse],
    }
    return MetricsReport(
        mse, mae, rmse, float(frame_ssim.mean()), psnr_from_mse(mse), per_frame,
        fingerprint(config) if config is not None else "",
        datetime.now(timezone.utc).isoformat(),
    )


@dataclass
class BenchResult:
    param_count: int
    flops_per_sample: int
    fps: float
    batch: int
    warmup_iters: int
    timed_iters: int
    repeats: list[float] = field(default_factory=list)


def fps_from_timing(timed_iters: int, batch: int, frames_out: int, elapsed: float) -> float:
    return timed_iters * batch * frames_out / elapsed


def fps_bench(params, cfg, batch: int = 1, warmup_iters: int = 3, timed_iters: int = 10,
              repeats: int = 3, rng: np.random.Generator | None = None) -> BenchResult:
    """Eval-mode inference throughput in predicted frames per second (median of ``repeats``)."""
    from .cost import count_params, estimate_flops
    from .model import model_forward

    if warmup_iters < 3 or timed_iters < 10:
        raise ValueError("fps_bench needs warmup_iters >= 3 and timed_iters >= 10")
    rng = rng or np.random.default_rng(0)
    dtype = params.embed_w.dtype
    x = rng.random((batch, cfg.T, cfg.C, cfg.H, cfg.W)).astype(dtype)
    for _ in range(warmup_iters):
        model_forward(x, cfg, params)
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(timed_iters):
            model_forward(x, cfg, params)
        runs.append(fps_from_timing(timed_iters, batch, cfg.T_out, time.perf_counter() - t0))
    return BenchResult(count_params(cfg), estimate_flops(cfg), statistics.median(runs), batch,
                       warmup_iters, timed_iters, runs)


def report_row(run_id: str, cfg, metrics: MetricsReport | None = None, bench: BenchResult | None = None) -> dict:
    from .cost import count_params, estimate_flops

    nan = float("nan")
    return {
        "run_id": run_id,
        "variant": cfg.variant.kind,
        "layers": cfg.variant.layers,
        "params": count_params(cfg),
        "flops": estimate_flops(cfg),
        "fps": bench.fps if bench else nan,
        "mse": metrics.mse if metrics else nan,
        "mae": metrics.mae if metrics else nan,
        "rmse": metrics.rmse if metrics else nan,
        "ssim": metrics.ssim if metrics else nan,
        "psnr": metrics.psnr if metrics else nan,
    }


def emit_report(rows, path, fmt: str = "csv") -> None:
    """Write report rows (dicts keyed by ``REPORT_COLUMNS``) as CSV or JSON lines."""
    if isinstance(rows, dict):
        rows = [rows]
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"format must be 'csv' or 'jsonl', got {fmt!r}")
    ordered = [{c: r[c] for c in REPORT_COLUMNS} for r in rows]
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            w.writeheader()
            for r in ordered:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        else:
            for r in ordered:
                fh.write(json.dumps(r) + "\n")


def _typed(col: str, v):
    if col in _STR_COLUMNS:
        return str(v)
    if col in _INT_COLUMNS:
        return int(v)
    return float(v)


def parse_report(path, fmt: str = "csv") -> list[dict]:
    with open(path, newline="") as fh:
        if fmt == "csv":
            return [{c: _typed(c, r[c]) for c in REPORT_COLUMNS} for r in csv.DictReader(fh)]
        return [{c: _typed(c, json.loads(line)[c]) for c in REPORT_COLUMNS} for line in fh if line.strip()]
