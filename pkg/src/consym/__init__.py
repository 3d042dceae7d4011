"""Contextual symmetries of weighted-clause models and symmetry-aware MCMC."""
from .errors import ConfigError, ConsymError, DimensionError, ModelError, ResourceLimitError
from .kernel import IMPLEMENTATION as KERNEL
from .model import Clause, Context, Evidence, Model, build_model, load_model, log_weight, reduce

__version__ = "0.1.0"

__all__ = [
    "Clause", "ConfigError", "ConsymError", "Context", "DimensionError", "Evidence", "KERNEL",
    "Model", "ModelError", "ResourceLimitError", "build_model", "load_model", "log_weight", "reduce",
]
