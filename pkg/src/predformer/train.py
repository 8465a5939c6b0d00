"""L2 objective, AdamW, learning-rate schedules and the training loop."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .model import ModelConfig, ModelParams, init_model, model_forward
from .tensor import GradTape, ShapeError, Tensor, as_tensor, mean_all, mul, sub

SCHEDULERS = ("onecycle", "cosine")

# fixed offsets from the run seed; changing one stream leaves the others alone
DATA_STREAM, INIT_STREAM, DROPOUT_STREAM, SHUFFLE_STREAM = 0, 1, 2, 3


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 1e-3
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    epochs: int = 1
    batch_size: int = 4
    scheduler: str = "onecycle"
    grad_clip: float | None = None
    seed: int = 0
    lr_min: float = 1e-6
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.lr_max > 0:
            raise ConfigError(f"lr_max must be > 0, got {self.lr_max}")
        if not 0 <= self.weight_decay < 1:
            raise ConfigError(f"weight_decay must lie in [0, 1), got {self.weight_decay}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}; valid: {', '.join(SCHEDULERS)}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be > 0 when set")
        if not 0 < self.pct_start < 1:
            raise ConfigError("pct_start must lie in (0, 1)")

    def replace(self, **kw) -> "TrainConfig":
        d = asdict(self)
        d.update(kw)
        return TrainConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


# ---------------------------------------------------------------- objective

def l2_loss(pred: Tensor, target) -> Tensor:
    """Mean squared difference over every element."""
    target = as_tensor(target, pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    d = sub(pred, target)
    return mean_all(mul(d, d))


# ---------------------------------------------------------------- optimizer

@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[Tensor]) -> "OptimizerState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], 0)


def adamw_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: OptimizerState,
    lr: float,
    cfg: TrainConfig,
    names: list[str] | None = None,
) -> None:
    """One decoupled-weight-decay Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            who = names[i] if names else f"#{i}"
            raise TrainingDivergedError(f"non-finite gradient for parameter {who}")
    b1, b2 = cfg.betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {p.shape}")
        dt = p.data.dtype.type
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * (g * g)
        update = (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(cfg.eps))
        if cfg.weight_decay:
            update = update + dt(cfg.weight_decay) * p.data
        p.data = p.data - dt(lr) * update


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the norm before clipping."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if norm > max_norm:
        s = max_norm / (norm + 1e-12)
        for g in grads:
            g *= g.dtype.type(s)
    return norm


# ---------------------------------------------------------------- schedules

def _anneal_cos(start: float, end: float, pct: float) -> float:
    return end + (start - end) / 2.0 * (math.cos(math.pi * pct) + 1.0)


def onecycle_lr(
    step: int,
    total_steps: int,
    lr_max: float,
    pct_start: float = 0.3,
    div_factor: float = 25.0,
    final_div_factor: float = 1e4,
) -> float:
    """Cosine warmup from ``lr_max / div_factor`` to ``lr_max`` at ``pct_start * total_steps``,
    then cosine decay to ``lr_max / (div_factor * final_div_factor)`` at the last step."""
    if total_steps < 1 or not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    initial = lr_max / div_factor
    floor = initial / final_div_factor
    peak = pct_start * total_steps
    last = total_steps - 1
    if step <= peak:
        return _anneal_cos(initial, lr_max, step / peak) if peak > 0 else lr_max
    if last <= peak:
        return lr_max
    return _anneal_cos(lr_max, floor, (step - peak) / (last - peak))


def cosine_lr(step: int, total_steps: int, lr_base: float, lr_min: float = 0.0) -> float:
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_base - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def schedule_lr(cfg: TrainConfig, step: int, total_steps: int) -> float:
    if cfg.scheduler == "onecycle":
        return onecycle_lr(step, total_steps, cfg.lr_max, cfg.pct_start, cfg.div_factor, cfg.final_div_factor)
    return cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)


# ---------------------------------------------------------------- loop

def stream_rng(seed: int, offset: int) -> np.random.Generator:
    return np.random.default_rng(seed + offset)


@dataclass
class EpochStats:
    loss_mean: float
    losses: list[float]
    lr_trace: list[float]
    wall_time: float


@dataclass
class Trainer:
    """Owns parameters, optimizer state and the RNG streams of one run.

    ``context`` and ``target`` are ``[B, T, C, H, W]`` arrays covering the
    whole training set; the schedule length is ``epochs * steps_per_epoch``.
    """

    model_cfg: ModelConfig
    train_cfg: TrainConfig
    context: np.ndarray
    target: np.ndarray
    params: ModelParams | None = None
    dtype: type = np.float32
    state: OptimizerState | None = None
    history: dict = field(default_factory=lambda: {"loss": [], "lr": []})
    epoch: int = 0

    def __post_init__(self):
        c = self.model_cfg
        want = (c.T, c.C, c.H, c.W)
        if self.context.ndim != 5 or self.context.shape[1:] != want:
            raise ConfigError(f"context frames {self.context.shape[1:]} do not match model [T, C, H, W] = {want}")
        if self.target.shape != self.context.shape[:1] + (c.T_out,) + want[1:]:
            raise ConfigError(f"target shape {self.target.shape} does not match context {self.context.shape}")
        seed = self.train_cfg.seed
        if self.params is None:
            self.params = init_model(c, stream_rng(seed, INIT_STREAM), self.dtype)
        self.names = [n for n, _ in self.params.named()]
        self.tensors = self.params.tensors()
        if self.state is None:
            self.state = OptimizerState.zeros_like(self.tensors)
        self.dropout_rng = stream_rng(seed, DROPOUT_STREAM)
        self.shuffle_rng = stream_rng(seed, SHUFFLE_STREAM)
        self.context = np.asarray(self.context, dtype=self.dtype)
        self.target = np.asarray(self.target, dtype=self.dtype)

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.context.shape[0] // self.train_cfg.batch_size)

    @property
    def total_steps(self) -> int:
        return self.train_cfg.epochs * self.steps_per_epoch

    def rng_state(self) -> dict:
        return {"dropout": self.dropout_rng.bit_generator.state, "shuffle": self.shuffle_rng.bit_generator.state}

    def set_rng_state(self, states: dict) -> None:
        self.dropout_rng.bit_generator.state = states["dropout"]
        self.shuffle_rng.bit_generator.state = states["shuffle"]

    def step(self, ctx: np.ndarray, tgt: np.ndarray) -> tuple[float, float]:
        """One optimizer step on a batch; returns ``(loss, lr)``."""
        with GradTape() as tape:
            pred = model_forward(ctx, self.model_cfg, self.params, rng=self.dropout_rng, mode="train")
            loss = l2_loss(pred, tgt)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"loss became {value} at step {self.state.step} (lr {self.history['lr'][-1] if self.history['lr'] else 'n/a'})"
            )
        grads = tape.backward(loss, self.tensors)
        if self.train_cfg.grad_clip is not None:
            clip_grad_norm(grads, self.train_cfg.grad_clip)
        lr = schedule_lr(self.train_cfg, min(self.state.step, self.total_steps - 1), self.total_steps)
        adamw_step(self.tensors, grads, self.state, lr, self.train_cfg, self.names)
        self.history["loss"].append(value)
        self.history["lr"].append(lr)
        return value, lr

    def train_epoch(self) -> EpochStats:
        t0 = time.perf_counter()
        n = self.context.shape[0]
        order = self.shuffle_rng.permutation(n)
        bs = self.train_cfg.batch_size
        losses, lrs = [], []
        for s in range(0, n, bs):
            idx = np.sort(order[s:s + bs])
            loss, lr = self.step(self.context[idx], self.target[idx])
            losses.append(loss)
            lrs.append(lr)
        self.epoch += 1
        return EpochStats(float(np.mean(losses)), losses, lrs, time.perf_counter() - t0)

    def predict(self, context: np.ndarray) -> np.ndarray:
        return model_forward(np.asarray(context, self.dtype), self.model_cfg, self.params).data


def train_epoch(trainer: Trainer) -> EpochStats:
    return trainer.train_epoch()
