"""Micro-macro solver for the 1D linear kinetic transport equation.

The solver splits the distribution f = rho + eps*g into its angular
average and a mean-zero fluctuation on staggered periodic grids, treats
the stiff collision term implicitly, and stays stable and accurate
uniformly in the scale ratio eps under an explicit step-size bound. As
eps -> 0 it turns into the classical 3-point explicit scheme for the
limiting diffusion equation.

Subpackages:

* :mod:`apkin.velocity` - quadrature average, scattering operator, its
  pseudo-inverse, diffusion coefficient.
* :mod:`apkin.spatial` - staggered periodic grids and difference operators.
* :mod:`apkin.scheme` - the micro-macro stepper and its step-size bound.
* :mod:`apkin.reference` - diffusion-limit and explicit kinetic oracles.
* :mod:`apkin.diagnostics` - energy audits, truncation and convergence
  studies, lemma checks, step-size sweeps.
* :mod:`apkin.manufactured` - exact Fourier modes for accuracy studies.
* :mod:`apkin.config` / :mod:`apkin.cli` - experiment front end (``apkin``).
"""

from .scheme import (
    CflReport,
    EPSILON_FLOOR,
    MicroMacroState,
    Trajectory,
    TransportProblem,
    decompose_initial,
    make_problem,
    make_state,
    max_stable_dt,
    random_state,
    refined_stable_dt,
    run,
    step,
    zero_average_defect,
)
from .spatial import StaggeredGrid, make_grid
from .velocity import (
    CollisionKernel,
    CollisionOperator,
    VelocityGrid,
    average,
    build_collision_operator,
    build_velocity_grid,
    diffusion_coefficient,
    isotropic_kernel,
    linear_anisotropic_kernel,
    pseudo_inverse_apply,
    telegraph_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "CflReport",
    "CollisionKernel",
    "CollisionOperator",
    "EPSILON_FLOOR",
    "MicroMacroState",
    "StaggeredGrid",
    "Trajectory",
    "TransportProblem",
    "VelocityGrid",
    "average",
    "build_collision_operator",
    "build_velocity_grid",
    "decompose_initial",
    "diffusion_coefficient",
    "isotropic_kernel",
    "linear_anisotropic_kernel",
    "make_grid",
    "make_problem",
    "make_state",
    "max_stable_dt",
    "pseudo_inverse_apply",
    "random_state",
    "refined_stable_dt",
    "run",
    "step",
    "telegraph_kernel",
    "zero_average_defect",
    "__version__",
]
