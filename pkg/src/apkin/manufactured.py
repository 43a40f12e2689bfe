"""Closed-form solutions for accuracy studies.

With velocities held on a fixed quadrature grid, a single spatial Fourier
mode turns the micro-macro system (constant sigma, no absorption, no
source) into a (count + 1)-dimensional linear ODE for the amplitude pair
(rho_hat, g_hat):

    d_t rho_hat = -i k <v g_hat>
    d_t g_hat   = -(i k / eps)(I - <.>)(v g_hat)
                  + (sigma/eps^2) L g_hat - (i k / eps^2) rho_hat v

Any eigenpair (lam, (rho_hat, g_hat)) therefore yields fields

    rho(t, x) = Re[rho_hat e^{lam t + i k x}],
    g(t, x, v_j) = Re[g_hat_j e^{lam t + i k x}]

that solve the continuous-in-(t, x) system exactly, so inserting them into
the scheme measures pure time/space truncation. On the two-velocity grid
with s = 1 the eigenvalues obey the dispersion relation
eps^2 lam^2 + 2 sigma lam + k^2 = 0, a useful cross-check.
"""

from dataclasses import dataclass

import numpy as np

from . import velocity


@dataclass(frozen=True)
class FourierMode:
    """One exact mode of the velocity-discretized micro-macro system."""

    vgrid: velocity.VelocityGrid
    wavenumber: float
    decay: complex
    rho_amp: complex
    g_amp: np.ndarray
    epsilon: float
    sigma: float

    def rho(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.real(self.rho_amp * np.exp(self.decay * t + 1j * self.wavenumber * x))

    def g(self, t, x):
        x = np.asarray(x, dtype=float)
        phase = np.exp(self.decay * t + 1j * self.wavenumber * x)
        return np.real(self.g_amp[None, :] * phase[:, None])


def _mode_matrix(op, epsilon, sigma, k):
    grid = op.grid
    n = grid.count
    v = grid.nodes
    w = grid.weights
    proj = np.eye(n) - 0.5 * np.outer(np.ones(n), w)
    m = np.zeros((n + 1, n + 1), dtype=complex)
    m[0, 1:] = -1j * k * 0.5 * (w * v)
    m[1:, 0] = -1j * k * v / epsilon**2
    m[1:, 1:] = (sigma / epsilon**2) * op.matrix - (1j * k / epsilon) * (proj @ np.diag(v))
    return m


def semi_discrete_mode(op, epsilon, sigma, wavenumber):
    """Slowest-decaying physical mode, normalized to rho_hat = 1.

    The amplitude system conserves <g_hat>, so eigenvectors split into
    physical modes with mean-zero g_hat and one stationary gauge mode
    (g_hat = -rho_hat/eps constant in v, reconstructing f = 0). Among the
    physical modes with a density component this picks the smallest |lam|,
    the branch tending to the diffusive decay -kappa k^2 as eps -> 0.
    """
    m = _mode_matrix(op, float(epsilon), float(sigma), float(wavenumber))
    lams, vecs = np.linalg.eig(m)
    order = np.argsort(np.abs(lams))
    for idx in order:
        vec = vecs[:, idx]
        g_hat = vec[1:]
        norm = np.linalg.norm(vec)
        mean_g = abs(velocity.average(op.grid, g_hat))
        if abs(vec[0]) > 1e-8 * norm and mean_g <= 1e-8 * norm:
            vec = vec / vec[0]
            return FourierMode(
                vgrid=op.grid,
                wavenumber=float(wavenumber),
                decay=complex(lams[idx]),
                rho_amp=complex(1.0),
                g_amp=vec[1:].copy(),
                epsilon=float(epsilon),
                sigma=float(sigma),
            )
    raise ValueError("no physical mode with a density component found")


def telegraph_decay_rates(epsilon, sigma, wavenumber):
    """Roots of eps^2 lam^2 + 2 sigma lam + k^2 = 0 (two-velocity, s = 1)."""
    eps2 = float(epsilon) ** 2
    return np.roots([eps2, 2.0 * float(sigma), float(wavenumber) ** 2])
