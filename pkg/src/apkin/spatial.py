"""Staggered periodic grids and their finite-difference operators.

Two interleaved uniform grids on a periodic interval of length N*dx:
integer nodes x_i = i*dx carry densities (shape (N,) arrays), half nodes
x_{i+1/2} = (i + 1/2)*dx carry kinetic fluctuations (shape (N, count)
arrays, face-major with the velocity index inner). Array index k stands
for face k + 1/2; all index arithmetic wraps modulo N.

Operators on face fields phi:

    d_minus : (phi_{i+1/2} - phi_{i-1/2}) / dx
    d_plus  : (phi_{i+3/2} - phi_{i+1/2}) / dx
    d_center: (phi_{i+3/2} - phi_{i-1/2}) / (2 dx)
    d_zero  : face -> node, (phi_{i+1/2} - phi_{i-1/2}) / dx at x_i

and on node fields mu:

    delta_zero: node -> face, (mu_{i+1} - mu_i) / dx at x_{i+1/2}.

On the periodic grid the discrete identities used by the stability
analysis hold exactly: d_minus + d_plus = 2*d_center, the upwind operator
equals v*d_center - (dx/2)|v| d_minus d_plus, and the summation-by-parts
relations telescope with no boundary remainder.
"""

from dataclasses import dataclass

import numpy as np

from . import velocity


@dataclass(frozen=True)
class StaggeredGrid:
    cell_count: int
    dx: float

    def __post_init__(self):
        if self.cell_count < 4:
            raise ValueError(f"grid needs at least 4 cells, got {self.cell_count}")
        if not self.dx > 0.0:
            raise ValueError(f"grid spacing must be positive, got {self.dx}")

    @property
    def length(self):
        return self.cell_count * self.dx

    @property
    def nodes(self):
        return self.dx * np.arange(self.cell_count)

    @property
    def faces(self):
        return self.dx * (np.arange(self.cell_count) + 0.5)


def make_grid(cell_count, length):
    """Uniform periodic staggered grid with N cells on [0, length)."""
    cell_count = int(cell_count)
    if not length > 0.0:
        raise ValueError(f"domain length must be positive, got {length}")
    return StaggeredGrid(cell_count=cell_count, dx=float(length) / cell_count)


def d_minus(phi, dx):
    phi = np.asarray(phi)
    return (phi - np.roll(phi, 1, axis=0)) / dx


def d_plus(phi, dx):
    phi = np.asarray(phi)
    return (np.roll(phi, -1, axis=0) - phi) / dx


def d_center(phi, dx):
    phi = np.asarray(phi)
    return (np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) / (2.0 * dx)


def d_zero(phi, dx):
    """Face field to node field; numerically d_minus re-centered at x_i."""
    phi = np.asarray(phi)
    return (phi - np.roll(phi, 1, axis=0)) / dx


def delta_zero(mu, dx):
    """Node field to face field: (mu_{i+1} - mu_i) / dx."""
    mu = np.asarray(mu)
    return (np.roll(mu, -1, axis=0) - mu) / dx


def upwind_transport(vgrid, phi, dx):
    """(v+ d_minus + v- d_plus) phi per velocity node, v± = (v ± |v|)/2."""
    v = vgrid.nodes
    v_pos = np.maximum(v, 0.0)
    v_neg = np.minimum(v, 0.0)
    return v_pos[None, :] * d_minus(phi, dx) + v_neg[None, :] * d_plus(phi, dx)


def project_fluctuation(vgrid, phi):
    """Remove the per-face angular average: phi - <phi>."""
    phi = np.asarray(phi)
    return phi - velocity.average(vgrid, phi)[..., None]
