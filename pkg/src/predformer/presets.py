"""Model configurations for the four benchmark settings plus desk-scale analogs."""
from __future__ import annotations

from .model import ModelConfig, VariantSpec
from .nn import DropSpec


def _variant(kind: str, gtbs: int, triplet_gtbs: int | None = None, skip_triplet: bool = False) -> VariantSpec:
    if kind.startswith("triplet") and triplet_gtbs is not None:
        return VariantSpec.for_blocks(kind, triplet_gtbs, layer_skip=skip_triplet)
    return VariantSpec.for_blocks(kind, gtbs, layer_skip=skip_triplet and kind.startswith("triplet"))


def moving_mnist(kind: str = "quad_tsst", gtbs: int = 24) -> ModelConfig:
    return ModelConfig(
        T=10, T_out=10, C=1, H=64, W=64, patch=8, dim=256, heads=8, hidden=1024,
        variant=_variant(kind, gtbs),
        drop=DropSpec(0.0, 0.0, 0.0),
    )


def human36m(kind: str = "quad_tsst") -> ModelConfig:
    return ModelConfig(
        T=4, T_out=4, C=3, H=256, W=256, patch=8, dim=256, heads=8, hidden=1024,
        variant=_variant(kind, 12, skip_triplet=True),
        drop=DropSpec(0.1, 0.1, 0.1),
    )


def taxibj(kind: str = "triplet_sts") -> ModelConfig:
    return ModelConfig(
        T=4, T_out=4, C=2, H=32, W=32, patch=4, dim=256, heads=8, hidden=1024,
        variant=_variant(kind, 8, triplet_gtbs=6),
        drop=DropSpec(0.1, 0.1, 0.1),
    )


def weatherbench(kind: str = "fac_ts") -> ModelConfig:
    return ModelConfig(
        T=12, T_out=12, C=1, H=32, W=64, patch=4, dim=256, heads=8, hidden=512,
        variant=_variant(kind, 8, triplet_gtbs=6),
        drop=DropSpec(0.1, 0.1, 0.25),
    )


def moving_mnist_analog(kind: str = "quad_tsst", gtbs: int = 12) -> ModelConfig:
    """32x32 frames, patch 4: the same 10 x 64 token grid as the 64x64 benchmark at half width."""
    return ModelConfig(
        T=10, T_out=10, C=1, H=32, W=32, patch=4, dim=128, heads=8, hidden=512,
        variant=_variant(kind, gtbs),
        drop=DropSpec(0.0, 0.0, 0.0),
    )


def desk(kind: str = "binary_ts", layers: int = 2) -> ModelConfig:
    """Small config used for the overfit harness and quick experiments."""
    return ModelConfig(
        T=10, T_out=10, C=1, H=32, W=32, patch=8, dim=128, heads=8, hidden=512,
        variant=VariantSpec(kind, layers),
        drop=DropSpec(0.0, 0.0, 0.0),
    )


PRESETS = {
    "moving_mnist": moving_mnist,
    "human36m": human36m,
    "taxibj": taxibj,
    "weatherbench": weatherbench,
    "moving_mnist_analog": moving_mnist_analog,
    "desk": desk,
}

# peak learning rate per preset; the larger value suits the small-image analogs
LEARNING_RATES = {"moving_mnist_analog": 1e-3, "taxibj": 1e-3}
DEFAULT_LR = 5e-4


def learning_rate(preset: str) -> float:
    return LEARNING_RATES.get(preset, DEFAULT_LR)
