"""Pure gated-transformer video prediction on a small numpy autodiff core."""
from .errors import ConfigError
from .model import VARIANTS, ModelConfig, ModelParams, VariantSpec, init_model, model_forward
from .nn import DropSpec
from .tensor import GradTape, Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DropSpec",
    "GradTape",
    "ModelConfig",
    "ModelParams",
    "Tensor",
    "VARIANTS",
    "VariantSpec",
    "init_model",
    "model_forward",
]
