"""Synthetic bouncing-shapes sequences.

Trajectories use integer positions and velocities only, so a given seed
produces the same bytes on every platform.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

SHAPE_KINDS = ("square", "cross", "disk")


@dataclass(frozen=True)
class ShapeSpec:
    H: int = 32
    W: int = 32
    num_objects: int = 2
    kinds: tuple[str, ...] = SHAPE_KINDS
    size_min: int = 6
    size_max: int = 8
    speed_min: int = 1
    speed_max: int = 3
    seed: int = 0
    allow_static: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if self.H < 1 or self.W < 1:
            raise ConfigError(f"canvas must be positive, got {self.H}x{self.W}")
        if self.num_objects < 1:
            raise ConfigError("need at least one object")
        bad = [k for k in self.kinds if k not in SHAPE_KINDS]
        if bad or not self.kinds:
            raise ConfigError(f"unknown shape kinds {bad}; valid: {', '.join(SHAPE_KINDS)}")
        if not 1 <= self.size_min <= self.size_max:
            raise ConfigError(f"bad size range [{self.size_min}, {self.size_max}]")
        if 2 * self.size_max >= min(self.H, self.W):
            raise ConfigError(f"object size {self.size_max} must be < half the canvas {min(self.H, self.W)}")
        lowest = 0 if self.allow_static else 1
        if not lowest <= self.speed_min <= self.speed_max:
            raise ConfigError(f"bad speed range [{self.speed_min}, {self.speed_max}] (minimum {lowest})")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kinds"] = list(self.kinds)
        return d


@dataclass
class MovingObject:
    kind: str
    size: int
    x: int
    y: int
    vx: int
    vy: int


@dataclass
class SequenceBatch:
    frames: np.ndarray  # [B, T + T_prime, C, H, W]
    T: int
    T_prime: int

    def __post_init__(self):
        if self.frames.ndim != 5:
            raise ValueError(f"frames must be [B, F, C, H, W], got shape {self.frames.shape}")


def sprite(kind: str, size: int) -> np.ndarray:
    """Binary ``size x size`` mask."""
    if kind == "square":
        return np.ones((size, size), np.float32)
    i = np.arange(size)
    if kind == "cross":
        w = max(1, size // 3)
        lo = (size - w) // 2
        band = (i >= lo) & (i < lo + w)
        return (band[:, None] | band[None, :]).astype(np.float32)
    if kind == "disk":
        # integer test of (i - c)^2 + (j - c)^2 <= (size/2)^2 with c = (size-1)/2
        d = 2 * i - (size - 1)
        return ((d[:, None] ** 2 + d[None, :] ** 2) <= size * size).astype(np.float32)
    raise ConfigError(f"unknown shape kind {kind!r}")


def bounce(pos: int, vel: int, limit: int) -> tuple[int, int]:
    """One step of a reflective walk on ``[0, limit]``."""
    p = pos + vel
    if p < 0:
        p, vel = -p, -vel
    elif p > limit:
        p, vel = 2 * limit - p, -vel
    return min(max(p, 0), limit), vel


def _spawn(spec: ShapeSpec, rng: np.random.Generator) -> list[MovingObject]:
    objs = []
    for _ in range(spec.num_objects):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        size = int(rng.integers(spec.size_min, spec.size_max + 1))
        x = int(rng.integers(0, spec.W - size + 1))
        y = int(rng.integers(0, spec.H - size + 1))
        speeds = rng.integers(spec.speed_min, spec.speed_max + 1, size=2)
        signs = rng.choice((-1, 1), size=2)
        objs.append(MovingObject(kind, size, x, y, int(speeds[0] * signs[0]), int(speeds[1] * signs[1])))
    return objs


def render_trajectory(objs: list[MovingObject], H: int, W: int, frames_total: int) -> np.ndarray:
    """Rasterise ``frames_total`` frames, advancing ``objs`` in place. Returns ``[F, 1, H, W]``."""
    out = np.zeros((frames_total, 1, H, W), np.float32)
    masks = [sprite(o.kind, o.size) for o in objs]
    for t in range(frames_total):
        canvas = out[t, 0]
        for o, m in zip(objs, masks):
            win = canvas[o.y:o.y + o.size, o.x:o.x + o.size]
            np.maximum(win, m, out=win)
        for o in objs:
            o.x, o.vx = bounce(o.x, o.vx, W - o.size)
            o.y, o.vy = bounce(o.y, o.vy, H - o.size)
    return out


def gen_sequence(spec: ShapeSpec, index: int, frames_total: int) -> np.ndarray:
    rng = np.random.default_rng(spec.seed ^ index)
    return render_trajectory(_spawn(spec, rng), spec.H, spec.W, frames_total)


def worker_threads() -> int:
    try:
        n = int(os.environ.get("PREDFORMER_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, min(n, os.cpu_count() or 1))


def gen_moving_shapes(spec: ShapeSpec, count: int, frames_total: int = 20, T: int | None = None) -> SequenceBatch:
    """``count`` sequences of ``frames_total`` frames; the first ``T`` (default half) are context."""
    if count < 1 or frames_total < 2:
        raise ConfigError("count must be >= 1 and frames_total >= 2")
    T = frames_total // 2 if T is None else T
    if not 1 <= T < frames_total:
        raise ConfigError(f"context length {T} must lie in [1, {frames_total})")
    frames = np.empty((count, frames_total, 1, spec.H, spec.W), np.float32)

    def fill(i):
        frames[i] = gen_sequence(spec, i, frames_total)

    threads = worker_threads()
    if threads > 1 and count > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, range(count)))
    else:
        for i in range(count):
            fill(i)
    return SequenceBatch(frames, T, frames_total - T)


def split_context_target(batch: SequenceBatch) -> tuple[np.ndarray, np.ndarray]:
    f = batch.frames
    if f.shape[1] != batch.T + batch.T_prime:
        raise ValueError(f"frame axis has {f.shape[1]} entries, expected T + T' = {batch.T + batch.T_prime}")
    return f[:, :batch.T], f[:, batch.T:]
