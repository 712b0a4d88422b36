"""Transient analysis of finite-buffer queues fed by Markov additive input."""

from .errors import MapqError, ModelError, NumericalError
from .model_core import (JumpDistribution, LevyComponent, ModelSpec, build_F, build_Phi,
                         laplace_exponent, load_model, validate)

__version__ = "0.1.0"

__all__ = [
    "JumpDistribution", "LevyComponent", "MapqError", "ModelError", "ModelSpec",
    "NumericalError", "build_F", "build_Phi", "laplace_exponent", "load_model", "validate",
]
