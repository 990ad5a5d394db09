"""Nonlocal two-phase Stefan and porous-medium solver with De Giorgi-type oscillation diagnostics."""

from .kernels import KernelSpec, check_kernel_bounds, rescale_kernel
from .nonlinearity import NonlinearitySpec, regularize
from .operator import Grid, apply_operator, build_weights, dirichlet_form, fractional_seminorm
from .records import RunRecord
from .solver import ProblemSpec, cfl_timestep, epsilon_ladder, run

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "KernelSpec",
    "NonlinearitySpec",
    "ProblemSpec",
    "RunRecord",
    "apply_operator",
    "build_weights",
    "cfl_timestep",
    "check_kernel_bounds",
    "dirichlet_form",
    "epsilon_ladder",
    "fractional_seminorm",
    "regularize",
    "rescale_kernel",
    "run",
]
