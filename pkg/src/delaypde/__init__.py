"""Finite-dimensional output-feedback stabilization of reaction-diffusion
PDEs with a delayed reaction term: eigenbasis, truncated closed-loop model,
constraint certificates and modal simulation."""

from .errors import NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericalError", "ValidationError", "__version__"]
