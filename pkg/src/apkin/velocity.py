"""Velocity-space discretization.

Velocities live on a symmetric quadrature grid in [-1, 1] whose weights sum
to 2, so the angular average <phi> = (1/2) * sum_j w_j phi(v_j) satisfies
<1> = 1. The scattering operator

    (L phi)(v_i) = sum_j w_j s(v_i, v_j) (phi_j - phi_i)

is conservative (<L phi> = 0), self-adjoint in the weighted inner product,
vanishes on constants, and is negative definite on mean-zero vectors with
spectral gap 2*s_min. Its pseudo-inverse on the mean-zero subspace yields
the diffusion coefficient kappa = -<v L^-1 v> / sigma.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidKernelError, NumericalFailureError

GAUSS_LEGENDRE = "gauss-legendre"
TWO_POINT_TELEGRAPH = "two-point-telegraph"


@dataclass(frozen=True)
class VelocityGrid:
    """Quadrature nodes and weights realizing the angular average."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self):
        return self.nodes.size


def build_velocity_grid(count, rule=GAUSS_LEGENDRE):
    """Build a symmetric velocity grid with ``count`` nodes.

    ``gauss-legendre`` places nodes strictly inside (-1, 1); the
    ``two-point-telegraph`` rule is the two-velocity model v = -1, +1 with
    unit weights. ``count`` must be even and at least 2 (symmetry needs
    node pairs).
    """
    count = int(count)
    if count < 2:
        raise ValueError(f"velocity grid needs at least 2 nodes, got {count}")
    if count % 2 != 0:
        raise ValueError(f"velocity grid needs an even node count, got {count}")
    if rule == GAUSS_LEGENDRE:
        nodes, weights = np.polynomial.legendre.leggauss(count)
    elif rule == TWO_POINT_TELEGRAPH:
        if count != 2:
            raise ValueError("two-point-telegraph rule requires count = 2")
        nodes = np.array([-1.0, 1.0])
        weights = np.array([1.0, 1.0])
    else:
        raise ValueError(f"unknown quadrature rule '{rule}'")
    return VelocityGrid(nodes=nodes, weights=weights)


def average(grid, phi):
    """Angular average <phi> = (1/2) sum_j w_j phi_j over the last axis."""
    phi = np.asarray(phi)
    if phi.shape[-1] != grid.count:
        raise ValueError(
            f"node vector has {phi.shape[-1]} entries, grid has {grid.count}"
        )
    return 0.5 * (phi @ grid.weights)


@dataclass(frozen=True)
class CollisionKernel:
    """Scattering kernel s(v, v') with user-supplied bounds.

    ``evaluate`` must accept numpy arrays. The global bounds
    0 < s_min <= s <= s_max are the caller's analytic responsibility; they
    are verified at quadrature node pairs when an operator is built.
    """

    evaluate: Callable
    s_min: float
    s_max: float
    name: str = "custom"


def isotropic_kernel():
    """s = 1/2, the normalized isotropic kernel."""
    return CollisionKernel(
        evaluate=lambda v, vp: np.full(np.broadcast(v, vp).shape, 0.5),
        s_min=0.5,
        s_max=0.5,
        name="isotropic",
    )


def telegraph_kernel():
    """s = 1 on the two-velocity grid (L = -2 I on mean-zero vectors)."""
    return CollisionKernel(
        evaluate=lambda v, vp: np.ones(np.broadcast(v, vp).shape),
        s_min=1.0,
        s_max=1.0,
        name="telegraph",
    )


def linear_anisotropic_kernel(beta):
    """s = (1 + beta*v*v')/2 with |beta| < 1."""
    beta = float(beta)
    if not abs(beta) < 1.0:
        raise ValueError(f"anisotropy coefficient must satisfy |beta| < 1, got {beta}")
    return CollisionKernel(
        evaluate=lambda v, vp: 0.5 * (1.0 + beta * np.asarray(v) * np.asarray(vp)),
        s_min=0.5 * (1.0 - abs(beta)),
        s_max=0.5 * (1.0 + abs(beta)),
        name=f"linear-anisotropic:{beta:g}",
    )


def table_kernel(grid, table, s_min=None, s_max=None):
    """Kernel given by its values at the node pairs of ``grid``.

    The evaluator looks entries up by nearest node, so it is exact at the
    grid's own nodes (the only points an operator build touches).
    """
    table = np.asarray(table, dtype=float)
    n = grid.count
    if table.shape != (n, n):
        raise ValueError(f"kernel table must be {n}x{n}, got {table.shape}")
    nodes = grid.nodes

    def evaluate(v, vp):
        i = np.abs(np.asarray(v)[..., None] - nodes).argmin(axis=-1)
        j = np.abs(np.asarray(vp)[..., None] - nodes).argmin(axis=-1)
        return table[i, j]

    return CollisionKernel(
        evaluate=evaluate,
        s_min=float(table.min()) if s_min is None else float(s_min),
        s_max=float(table.max()) if s_max is None else float(s_max),
        name="custom-table",
    )


def normalization_defect(grid, kernel):
    """Max over nodes of |quadrature of s(v_i, .) - 1|.

    Physical kernels satisfy the unit normalization; the two-velocity
    telegraph convention (s = 1, weights 1) intentionally does not, so the
    defect is reported rather than enforced.
    """
    vi, vj = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    s = kernel.evaluate(vi, vj)
    return float(np.abs(s @ grid.weights - 1.0).max())


@dataclass(frozen=True)
class CollisionOperator:
    """Dense matrix form of the scattering operator on a velocity grid."""

    matrix: np.ndarray
    grid: VelocityGrid
    spectral_gap: float
    _bordered: np.ndarray = field(repr=False, default=None)

    def apply(self, phi):
        """L phi for node vectors or (..., count) stacks."""
        return np.asarray(phi) @ self.matrix.T


def build_collision_operator(grid, kernel, symmetry_tol=1e-14):
    """Discretize the scattering operator with the grid's quadrature.

    Raises :class:`InvalidKernelError` if the kernel leaves its declared
    bounds at any node pair, or if it is not symmetric there.
    """
    vi, vj = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    s = np.asarray(kernel.evaluate(vi, vj), dtype=float)
    if not (kernel.s_min > 0.0):
        raise InvalidKernelError(f"kernel lower bound must be positive, got {kernel.s_min}")
    if s.min() < kernel.s_min - 1e-14 or s.max() > kernel.s_max + 1e-14:
        raise InvalidKernelError(
            f"kernel leaves [{kernel.s_min}, {kernel.s_max}] at a node pair: "
            f"range [{s.min()}, {s.max()}]"
        )
    asym = np.abs(s - s.T).max()
    if asym > symmetry_tol * max(1.0, kernel.s_max):
        raise InvalidKernelError(f"kernel asymmetry {asym:.3e} exceeds tolerance")

    # (L phi)_i = sum_j w_j s_ij phi_j - phi_i sum_j w_j s_ij
    matrix = s * grid.weights[None, :]
    matrix -= np.diag(s @ grid.weights)

    # Bordered system for the constrained solve: the extra column keeps the
    # matrix nonsingular across the null space, the extra row pins <psi> = 0.
    n = grid.count
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = matrix
    bordered[:n, n] = 1.0
    bordered[n, :n] = 0.5 * grid.weights
    return CollisionOperator(
        matrix=matrix,
        grid=grid,
        spectral_gap=2.0 * kernel.s_min,
        _bordered=bordered,
    )


def pseudo_inverse_apply(op, phi, mean_tol=1e-12):
    """Solve L psi = phi with <psi> = 0 for mean-zero phi.

    Accepts stacks of node vectors with shape (..., count). The mean-zero
    constraint is enforced through a bordered linear system rather than by
    projecting an unconstrained solve.
    """
    phi = np.asarray(phi, dtype=float)
    grid = op.grid
    single = phi.ndim == 1
    stack = np.atleast_2d(phi)
    if stack.shape[-1] != grid.count:
        raise ValueError(
            f"node vector has {stack.shape[-1]} entries, grid has {grid.count}"
        )
    means = average(grid, stack)
    scale = max(1.0, float(np.abs(stack).max(initial=0.0)))
    if np.abs(means).max(initial=0.0) > mean_tol * scale:
        raise ValueError(
            f"pseudo-inverse input must be mean-zero: max |<phi>| = "
            f"{np.abs(means).max():.3e}"
        )
    rhs = np.zeros((grid.count + 1, stack.shape[0]))
    rhs[: grid.count] = stack.T
    try:
        sol = np.linalg.solve(op._bordered, rhs)
    except np.linalg.LinAlgError as exc:  # guard; cannot occur for valid kernels
        raise NumericalFailureError(f"singular pseudo-inverse solve: {exc}") from exc
    psi = sol[: grid.count].T
    return psi[0] if single else psi.reshape(phi.shape)


def diffusion_coefficient(op, sigma):
    """kappa = -<v L^-1 v> / sigma, strictly positive for valid kernels."""
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"total cross section must be positive, got {sigma}")
    v = op.grid.nodes
    kappa = -average(op.grid, v * pseudo_inverse_apply(op, v)) / sigma
    if not kappa > 0.0:
        raise NumericalFailureError(f"non-positive diffusion coefficient {kappa}")
    return float(kappa)
