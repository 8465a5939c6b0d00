"""Closed-form parameter and FLOP accounting.

FLOPs follow the multiply-accumulate convention (one MAC counts as one FLOP)
and cover the linear maps and the two attention products; layer norms,
softmax and elementwise ops are not counted.
"""
from __future__ import annotations

from .model import ModelConfig
from .nn import mlp_hidden


def gtb_params(dim: int, hidden: int, ffn_kind: str = "swiglu") -> int:
    ln = 2 * 2 * dim
    attn = 4 * (dim * dim + dim)
    if ffn_kind == "swiglu":
        ffn = 2 * (dim * hidden + hidden) + hidden * dim + dim
    else:
        m = mlp_hidden(hidden)
        ffn = dim * m + m + m * dim + dim
    return ln + attn + ffn


def count_params(cfg: ModelConfig) -> int:
    d, pd = cfg.dim, cfg.patch_dim
    total = pd * d + d + 2 * d  # embedding + its layer norm
    if cfg.pe_kind == "learnable":
        total += cfg.T * cfg.num_patches * d
    total += cfg.variant.total_gtbs * gtb_params(d, cfg.hidden, cfg.ffn_kind)
    if cfg.final_norm:
        total += 2 * d
    total += d * pd + pd
    return total


def gtb_flops(groups: int, length: int, dim: int, hidden: int, ffn_kind: str = "swiglu") -> int:
    proj = 4 * groups * length * dim * dim
    attn = 2 * groups * length * length * dim
    if ffn_kind == "swiglu":
        ffn = 3 * groups * length * dim * hidden
    else:
        ffn = 2 * groups * length * dim * mlp_hidden(hidden)
    return proj + attn + ffn


def block_kinds(cfg: ModelConfig) -> list[str]:
    return [k for unit in cfg.variant.schedule() for k in unit]


def estimate_flops(cfg: ModelConfig) -> int:
    """MACs for one input sequence."""
    t, n, d = cfg.T, cfg.num_patches, cfg.dim
    shapes = {"S": (t, n), "T": (n, t), "F": (1, t * n)}
    total = 2 * t * n * cfg.patch_dim * d  # embedding + recovery
    for kind in block_kinds(cfg):
        g, l = shapes[kind]
        total += gtb_flops(g, l, d, cfg.hidden, cfg.ffn_kind)
    return total
