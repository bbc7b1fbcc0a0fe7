"""Weighted Evans functions and certified eigenvalue-free regions."""

from .certify import (CertifiedRectangle, ExclusionDisk, ExtensionRegion, SweepTrace, bound,
                      disk, extension_grid, extension_region, mu_period, qnewton_sweep,
                      rectangle_from_diamonds, slope_at_eigenvalue)
from .cli import load_problem, save_problem
from .errors import EvansError, NumericalError, UserError
from .evans import EvansValue
from .greens import QuadratureSpec, assemble, kernel, weight
from .oracle import Circle, Polyline, Rectangle, fd_spectrum, sturm_count, winding_count
from .problem import ProblemSpec, make_problem

__version__ = "0.1.0"

__all__ = [
    "CertifiedRectangle", "ExclusionDisk", "ExtensionRegion", "SweepTrace", "bound", "disk",
    "extension_grid", "extension_region", "mu_period", "qnewton_sweep",
    "rectangle_from_diamonds", "slope_at_eigenvalue", "load_problem", "save_problem",
    "EvansError", "NumericalError", "UserError", "EvansValue", "QuadratureSpec", "assemble",
    "kernel", "weight", "Circle", "Polyline", "Rectangle", "fd_spectrum", "sturm_count",
    "winding_count", "ProblemSpec", "make_problem",
]
