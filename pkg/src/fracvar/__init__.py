"""Riesz fractional calculus on grids: operators, linear-growth energies, solvers and relaxation experiments."""
from .core import DomainMask, Field, FracParams, GridSpec, PoleError, frac_constants, gamma_fn, make_bump
from .ops import OperatorBackend

__version__ = "0.1.0"

__all__ = [
    "DomainMask",
    "Field",
    "FracParams",
    "GridSpec",
    "OperatorBackend",
    "PoleError",
    "frac_constants",
    "gamma_fn",
    "make_bump",
]
