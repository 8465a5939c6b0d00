"""End-to-end predictor: patch embedding, positional code, variant encoder, patch recovery."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import (
    LN_EPS,
    DropSpec,
    GTBParams,
    gtb_forward,
    init_gtb,
    init_layer_norm,
    init_linear,
    named_tensors,
    trunc_normal,
)
from .tensor import Tensor, add, expand_leading, layer_norm, linear, permute, reshape

# name -> per-layer pattern; "F" full spatiotemporal, "S" spatial, "T" temporal
VARIANT_PATTERNS = {
    "full_attention": "F",
    "fac_st": "ST",
    "fac_ts": "TS",
    "binary_ts": "TS",
    "binary_st": "ST",
    "triplet_tst": "TST",
    "triplet_sts": "STS",
    "quad_tsst": "TSST",
    "quad_stts": "STTS",
}
VARIANTS = tuple(VARIANT_PATTERNS)
PE_KINDS = ("sinusoidal", "learnable", "none")
FFN_KINDS = ("swiglu", "mlp")


@dataclass(frozen=True)
class VariantSpec:
    """Encoder layout.

    For the factorized kinds a layer contributes one GTB to each of the two
    stages, so ``fac_ts`` with ``layers=12`` is 12 temporal GTBs followed by
    12 spatial GTBs.
    """

    kind: str = "quad_tsst"
    layers: int = 1
    layer_skip: bool = False

    def __post_init__(self):
        if self.kind not in VARIANT_PATTERNS:
            raise ConfigError(f"unknown variant {self.kind!r}; valid: {', '.join(VARIANTS)}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")

    @property
    def gtb_per_layer(self) -> int:
        return len(VARIANT_PATTERNS[self.kind])

    @property
    def total_gtbs(self) -> int:
        return self.layers * self.gtb_per_layer

    @property
    def factorized(self) -> bool:
        return self.kind.startswith("fac_")

    def schedule(self) -> list[str]:
        """Residual units in execution order; each string is the GTB kinds inside one unit."""
        pattern = VARIANT_PATTERNS[self.kind]
        if self.factorized:
            first, second = pattern
            return [first] * self.layers + [second] * self.layers
        return [pattern] * self.layers

    @classmethod
    def for_blocks(cls, kind: str, total_gtbs: int, layer_skip: bool = False) -> "VariantSpec":
        """Layer count whose GTB total is closest to ``total_gtbs``."""
        per = len(VARIANT_PATTERNS.get(kind, "F"))
        return cls(kind, max(1, int(round(total_gtbs / per))), layer_skip)


@dataclass(frozen=True)
class ModelConfig:
    T: int = 10
    T_out: int = 10
    C: int = 1
    H: int = 64
    W: int = 64
    patch: int = 8
    dim: int = 256
    heads: int = 8
    hidden: int = 1024
    variant: VariantSpec = field(default_factory=VariantSpec)
    drop: DropSpec = field(default_factory=DropSpec)
    pe_kind: str = "sinusoidal"
    ffn_kind: str = "swiglu"
    final_norm: bool = True

    def __post_init__(self):
        if self.H % self.patch or self.W % self.patch:
            raise ConfigError(f"frame {self.H}x{self.W} is not divisible by patch size {self.patch}")
        if self.T_out != self.T:
            raise ConfigError(f"T_out ({self.T_out}) must equal T ({self.T})")
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} is not divisible by {self.heads} heads")
        if self.pe_kind not in PE_KINDS:
            raise ConfigError(f"unknown pe_kind {self.pe_kind!r}")
        if self.pe_kind == "sinusoidal" and self.dim % 2:
            raise ConfigError("sinusoidal position code needs an even dim")
        if self.ffn_kind not in FFN_KINDS:
            raise ConfigError(f"unknown ffn_kind {self.ffn_kind!r}")
        for name in ("T", "C", "H", "W", "patch", "dim", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def num_patches(self) -> int:
        return (self.H // self.patch) * (self.W // self.patch)

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.C

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["variant"] = VariantSpec(**d["variant"])
        d["drop"] = DropSpec(**d["drop"])
        return cls(**d)


@dataclass
class ModelParams:
    embed_w: Tensor
    embed_b: Tensor
    embed_ln_g: Tensor
    embed_ln_b: Tensor
    pe: Tensor | None
    blocks: list[GTBParams]
    final_ln_g: Tensor | None
    final_ln_b: Tensor | None
    dec_w: Tensor
    dec_b: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        return list(named_tensors(self))

    def tensors(self) -> list[Tensor]:
        return [t for _, t in named_tensors(self)]


def init_model(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> ModelParams:
    d = cfg.dim
    embed_w, embed_b = init_linear(rng, cfg.patch_dim, d, dtype)
    embed_ln_g, embed_ln_b = init_layer_norm(d, dtype)
    pe = None
    if cfg.pe_kind == "learnable":
        pe = Tensor(trunc_normal(rng, (cfg.T, cfg.num_patches, d), dtype=dtype), requires_grad=True)
    blocks = [
        init_gtb(rng, d, cfg.heads, cfg.hidden, cfg.ffn_kind, dtype) for _ in range(cfg.variant.total_gtbs)
    ]
    final_g = final_b = None
    if cfg.final_norm:
        final_g, final_b = init_layer_norm(d, dtype)
    dec_w, dec_b = init_linear(rng, d, cfg.patch_dim, dtype)
    return ModelParams(embed_w, embed_b, embed_ln_g, embed_ln_b, pe, blocks, final_g, final_b, dec_w, dec_b)


# ---------------------------------------------------------------- embedding / recovery

def frames_to_patches(frames: Tensor, cfg: ModelConfig) -> Tensor:
    b, t = frames.shape[:2]
    p = cfg.patch
    hp, wp = cfg.H // p, cfg.W // p
    x = reshape(frames, (b, t, cfg.C, hp, p, wp, p))
    x = permute(x, (0, 1, 3, 5, 2, 4, 6))
    return reshape(x, (b, t, hp * wp, cfg.patch_dim))


def patches_to_frames(tokens: Tensor, cfg: ModelConfig) -> Tensor:
    b, t = tokens.shape[:2]
    p = cfg.patch
    hp, wp = cfg.H // p, cfg.W // p
    x = reshape(tokens, (b, t, hp, wp, cfg.C, p, p))
    x = permute(x, (0, 1, 4, 2, 5, 3, 6))
    return reshape(x, (b, t, cfg.C, cfg.H, cfg.W))


def patch_embed(frames, cfg: ModelConfig, w: Tensor, b: Tensor, ln_g: Tensor, ln_b: Tensor) -> Tensor:
    """[B, T, C, H, W] frames -> [B, T, N, D] layer-normalised tokens."""
    frames = frames if isinstance(frames, Tensor) else Tensor(frames)
    if frames.ndim != 5 or frames.shape[2:] != (cfg.C, cfg.H, cfg.W):
        raise ConfigError(f"frames {frames.shape} do not match config C,H,W={cfg.C},{cfg.H},{cfg.W}")
    if cfg.H % cfg.patch or cfg.W % cfg.patch:
        raise ConfigError(f"frame {cfg.H}x{cfg.W} is not divisible by patch size {cfg.patch}")
    return layer_norm(linear(frames_to_patches(frames, cfg), w, b), ln_g, ln_b, LN_EPS)


def patch_recover(tokens: Tensor, cfg: ModelConfig, w: Tensor, b: Tensor) -> Tensor:
    """[B, T, N, D] tokens -> [B, T, C, H, W] frames via a per-token linear map."""
    return patches_to_frames(linear(tokens, w, b), cfg)


def sincos(positions: np.ndarray, dim: int, quadrature: bool = False) -> np.ndarray:
    """Sin/cos code; pair k uses frequency 10000^(-2k/dim).

    ``quadrature=True`` swaps the roles (cos on even channels, sin on odd).
    """
    k = np.arange(dim // 2)
    angles = np.outer(np.asarray(positions, dtype=np.float64), 10000.0 ** (-2.0 * k / dim))
    out = np.empty((len(angles), dim))
    first, second = (np.cos, np.sin) if quadrature else (np.sin, np.cos)
    out[:, 0::2] = first(angles)
    out[:, 1::2] = second(angles)
    return out


def positional_encoding(T: int, N: int, D: int, dtype=np.float32) -> np.ndarray:
    """[T, N, D] absolute code: temporal sin/cos of t plus quadrature sin/cos of patch index n.

    Using the quadrature phase for the spatial term keeps (t, n) and (n, t)
    apart; with identical codes the sum would be symmetric.
    """
    if D % 2:
        raise ConfigError("positional encoding needs an even dim")
    temporal = sincos(np.arange(T), D)
    spatial = sincos(np.arange(N), D, quadrature=True)
    return (temporal[:, None, :] + spatial[None, :, :]).astype(dtype)


# ---------------------------------------------------------------- encoder

def spatial_pass(x: Tensor, block: GTBParams, drop: DropSpec, rng=None, index: int = 0, total: int = 1) -> Tensor:
    b, t, n, d = x.shape
    y = gtb_forward(reshape(x, (b * t, n, d)), block, drop, rng, index, total)
    return reshape(y, (b, t, n, d))


def temporal_pass(x: Tensor, block: GTBParams, drop: DropSpec, rng=None, index: int = 0, total: int = 1) -> Tensor:
    b, t, n, d = x.shape
    xt = reshape(permute(x, (0, 2, 1, 3)), (b * n, t, d))
    y = gtb_forward(xt, block, drop, rng, index, total)
    return permute(reshape(y, (b, n, t, d)), (0, 2, 1, 3))


def full_pass(x: Tensor, block: GTBParams, drop: DropSpec, rng=None, index: int = 0, total: int = 1) -> Tensor:
    b, t, n, d = x.shape
    y = gtb_forward(reshape(x, (b, t * n, d)), block, drop, rng, index, total)
    return reshape(y, (b, t, n, d))


_PASSES = {"S": spatial_pass, "T": temporal_pass, "F": full_pass}


def encoder_forward(x: Tensor, cfg: ModelConfig, blocks: list[GTBParams], drop: DropSpec | None = None, rng=None) -> Tensor:
    drop = cfg.drop if drop is None else drop
    units = cfg.variant.schedule()
    total = sum(len(u) for u in units)
    if len(blocks) != total:
        raise ConfigError(f"variant {cfg.variant.kind} needs {total} GTBs, got {len(blocks)}")
    i = 0
    for unit in units:
        inp = x
        for kind in unit:
            x = _PASSES[kind](x, blocks[i], drop, rng, i, total)
            i += 1
        if cfg.variant.layer_skip:
            x = add(x, inp)
    return x


def model_forward(frames, cfg: ModelConfig, params: ModelParams, rng=None, mode: str = "eval") -> Tensor:
    """Predict the next ``T_out`` frames from ``[B, T, C, H, W]`` context frames."""
    drop = cfg.drop.train() if mode == "train" else cfg.drop.eval()
    x = patch_embed(frames, cfg, params.embed_w, params.embed_b, params.embed_ln_g, params.embed_ln_b)
    b = x.shape[0]
    if cfg.pe_kind == "sinusoidal":
        pe = positional_encoding(cfg.T, cfg.num_patches, cfg.dim, x.dtype)
        x = add(x, Tensor(np.broadcast_to(pe, x.shape)))
    elif cfg.pe_kind == "learnable":
        x = add(x, expand_leading(params.pe, b))
    x = encoder_forward(x, cfg, params.blocks, drop, rng)
    if cfg.final_norm:
        x = layer_norm(x, params.final_ln_g, params.final_ln_b, LN_EPS)
    return patch_recover(x, cfg, params.dec_w, params.dec_b)
