"""Shared numerical kernels: least squares, K0, numerical differentiation."""
from reslab._backend import BACKEND
from reslab.numerics.diff import finite_diff_jacobian
from reslab.numerics.lm import (
    DegreesOfFreedomWarning,
    FitReport,
    SingularNormalEquations,
    levenberg_marquardt,
)
from reslab.numerics.special import bessel_k0, bessel_k0e

__all__ = [
    "BACKEND",
    "DegreesOfFreedomWarning",
    "FitReport",
    "SingularNormalEquations",
    "bessel_k0",
    "bessel_k0e",
    "finite_diff_jacobian",
    "levenberg_marquardt",
]
