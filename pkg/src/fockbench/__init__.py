"""Numerical laboratory for ε-scaled second quantization and semiclassical limits."""

from .fock_core import BOSON, FERMION, ResourceError, Statistics

__version__ = "0.1.0"

__all__ = ["BOSON", "FERMION", "ResourceError", "Statistics", "__version__"]
