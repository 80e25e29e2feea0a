"""Numerical laboratory for finite propagation speed of first-order hyperbolic
systems with time-dependent, possibly rough coefficients."""
__version__ = "0.1.0"

from . import errors, matcore
from .coefficients import CoefficientFamily, ConeRadii, cone_radii
from .mollify import KERNEL, MollifiedSymmetrizer
from .solver import LatticeProblem, LatticeRun, solve_lattice
from .symbol import HyperbolicityClass, classify
from .symmetrizer import Symmetrizer, adjoint_check, build_strict, validate

__all__ = [
    "CoefficientFamily", "ConeRadii", "HyperbolicityClass", "KERNEL", "LatticeProblem",
    "LatticeRun", "MollifiedSymmetrizer", "Symmetrizer", "adjoint_check", "build_strict",
    "classify", "cone_radii", "errors", "matcore", "solve_lattice", "validate",
]
