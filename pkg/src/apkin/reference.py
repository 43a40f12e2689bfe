"""Reference solvers used as oracles against the micro-macro scheme.

* a 3-point explicit scheme for the limiting diffusion equation
  d_t rho - d_x kappa d_x rho = -sigma_a rho + S with the per-face
  coefficients kappa_{i+1/2} = -<v L^-1 v> / sigma_{i+1/2},
* a fully explicit upwind solver for the kinetic equation itself, usable
  at moderate eps under a hard-refusing step-size guard,
* the leading-order fluctuation g = (1/sigma) L^-1 (v * delta_zero rho),
  whose flux is the discrete Fick law <v g> = -kappa * delta_zero rho.
"""

from dataclasses import dataclass

import numpy as np

from . import spatial, velocity
from .errors import NumericalFailureError


@dataclass(frozen=True)
class DiffusionProblem:
    grid: spatial.StaggeredGrid
    kappa_faces: np.ndarray
    sigma_a_nodes: np.ndarray
    source_nodes: np.ndarray

    def __post_init__(self):
        if not np.all(self.kappa_faces > 0.0):
            raise ValueError("diffusion coefficients must be positive at every face")


def diffusion_problem_from_transport(problem):
    """Limit problem with the transport problem's own kappa values.

    Reusing -<v L^-1 v> / sigma_{i+1/2} verbatim isolates time/space
    discretization differences from quadrature differences in limit tests.
    """
    v = problem.vgrid.nodes
    mobility = -velocity.average(
        problem.vgrid, v * velocity.pseudo_inverse_apply(problem.operator, v)
    )
    return DiffusionProblem(
        grid=problem.grid,
        kappa_faces=mobility / problem.sigma_faces,
        sigma_a_nodes=problem.sigma_a_nodes,
        source_nodes=problem.source_nodes,
    )


def diffusion_dt_bound(dp):
    """Standard explicit-diffusion restriction dx^2 / (2 max kappa)."""
    return dp.grid.dx**2 / (2.0 * float(dp.kappa_faces.max()))


@dataclass
class DiffusionTrajectory:
    times: list
    states: list
    dt_flagged: bool

    @property
    def final(self):
        return self.states[-1]


def run_diffusion(dp, rho0, dt, final_time, keep_states=True):
    """March rho^{n+1}_i = rho^n_i + (dt/dx)(kappa delta rho)^n_i
    - dt sigma_a rho^n_i + dt S_i on the periodic grid.

    A dt above the explicit stability bound is flagged, not refused. The
    last step is shortened to land exactly on ``final_time``.
    """
    dx = dp.grid.dx
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    rho = np.ascontiguousarray(rho0, dtype=float)
    flagged = dt > diffusion_dt_bound(dp) * (1.0 + 1e-12)

    times = [0.0]
    states = [rho]
    t = 0.0
    while t < final_time:
        last = final_time - t <= dt * (1.0 + 1e-9)
        h = final_time - t if last else dt
        flux = dp.kappa_faces * spatial.delta_zero(rho, dx)
        rho = (
            rho
            + h * spatial.d_zero(flux, dx)
            - h * dp.sigma_a_nodes * rho
            + h * dp.source_nodes
        )
        if not np.all(np.isfinite(rho)):
            raise NumericalFailureError("non-finite density in diffusion solve", step_index=len(times))
        t = final_time if last else t + dt
        if keep_states or len(states) == 1:
            times.append(t)
            states.append(rho)
        else:
            times[-1] = t
            states[-1] = rho
    return DiffusionTrajectory(times=times, states=states, dt_flagged=flagged)


def explicit_kinetic_dt_bound(problem, safety=0.9):
    """Step-size guard for the explicit kinetic oracle.

    Conservative on purpose: transport needs dt <= eps*dx/max|v| and the
    stiff relaxation term, treated explicitly, needs
    dt <= eps^2/(2 s_max sigma_max).
    """
    eps = problem.epsilon
    vmax = float(np.abs(problem.vgrid.nodes).max())
    return safety * min(
        eps * problem.grid.dx / vmax,
        eps**2 / (2.0 * problem.kernel.s_max * problem.sigma_max),
    )


@dataclass
class KineticTrajectory:
    times: list
    states: list

    @property
    def final(self):
        return self.states[-1]


def run_explicit_kinetic(problem, f0_faces, dt, final_time, keep_states=True):
    """Explicit upwind/Euler march of the kinetic equation on face values.

    Refuses step sizes above :func:`explicit_kinetic_dt_bound` - an oracle
    that silently blows up is worse than none. All coefficients are
    sampled at half nodes, where f lives.
    """
    dt = float(dt)
    bound = explicit_kinetic_dt_bound(problem)
    if dt > bound * (1.0 + 1e-12):
        raise ValueError(
            f"explicit kinetic oracle refuses dt = {dt:g} above its stability "
            f"guard {bound:g}"
        )
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")

    eps = problem.epsilon
    dx = problem.grid.dx
    vgrid = problem.vgrid
    faces = problem.grid.faces
    sigma = problem.sigma_fn(faces)[:, None]
    sigma_a = problem.sigma_a_fn(faces)[:, None]
    source = problem.source_fn(faces)[:, None]

    f = np.ascontiguousarray(f0_faces, dtype=float)
    times = [0.0]
    states = [f]
    t = 0.0
    while t < final_time:
        last = final_time - t <= dt * (1.0 + 1e-9)
        h = final_time - t if last else dt
        collision = problem.operator.apply(f)
        f = (
            f
            - (h / eps) * spatial.upwind_transport(vgrid, f, dx)
            + (h / eps**2) * sigma * collision
            - h * sigma_a * f
            + h * source
        )
        if not np.all(np.isfinite(f)):
            raise NumericalFailureError("non-finite state in kinetic oracle", step_index=len(times))
        t = final_time if last else t + dt
        if keep_states or len(states) == 1:
            times.append(t)
            states.append(f)
        else:
            times[-1] = t
            states[-1] = f
    return KineticTrajectory(times=times, states=states)


def asymptotic_g(op, sigma_faces, rho, dx):
    """Leading-order fluctuation (1/sigma) L^-1 (v * delta_zero rho).

    This is the eps -> 0 limit of the implicit collision solve; its flux
    is <v g> = -kappa * delta_zero rho at every face, so feeding it to the
    density update reproduces the 3-point diffusion scheme.
    """
    v = op.grid.nodes
    drho = spatial.delta_zero(np.asarray(rho, dtype=float), dx)
    stiff = drho[:, None] * v[None, :]
    return velocity.pseudo_inverse_apply(op, stiff) / np.asarray(sigma_faces)[:, None]
