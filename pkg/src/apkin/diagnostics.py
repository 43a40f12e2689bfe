"""Executable checks behind the solver's stability and accuracy claims.

* energy audit: E^n = |rho^n|^2 + eps^2 |g^n|^2 must not grow (source-free
  runs under the stability bound), or grows at most linearly with a source;
* truncation measurement: insert an exact solution into the scheme and
  take norms of the residual pair (a, b), which should scale like
  (1 + eps^2) dt + dx^2 + eps dx;
* self-convergence tables in the discrete L1 norms of the error estimate;
* numeric verification of the Taylor finite-difference bounds with their
  explicit constants, and of the discrete operator lemmas on random fields;
* an empirical sweep of step sizes around the stability bound (the bound
  is sufficient only, so nothing is asserted above it).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import manufactured, scheme, spatial, velocity
from .errors import NumericalFailureError
from .rng import Lcg


# ---------------------------------------------------------------------------
# energy


@dataclass(frozen=True)
class EnergyRecord:
    step_index: int
    rho_norm_sq: float
    g_norm_sq: float
    energy: float


def energy(state, problem, epsilon=None):
    """Discrete energy of one state; epsilon defaults to the problem's."""
    rho_sq, g_sq, total = scheme._energy_parts(state, problem, epsilon)
    return EnergyRecord(
        step_index=state.step_index,
        rho_norm_sq=rho_sq,
        g_norm_sq=g_sq,
        energy=total,
    )


def energy_records(trajectory):
    """Per-step energies of a trajectory, recomputed if not recorded."""
    if trajectory.energy_history:
        return [
            EnergyRecord(step_index=i, rho_norm_sq=r, g_norm_sq=g, energy=e)
            for i, (r, g, e) in enumerate(trajectory.energy_history)
        ]
    return [energy(s, trajectory.problem) for s in trajectory.states]


@dataclass
class EnergyAudit:
    monotone: bool
    max_violation: float
    records: list
    mode: str
    growth_fit: float = 0.0


def audit_energy(trajectory, tol=1e-12):
    """Check the per-step energy estimate E^{n+1} <= E^n (1 + tol).

    Source-free runs are audited for monotone decay. With a source the
    audit switches to linear-growth mode and reports the smallest rate c
    with E^n <= E^0 + n dt c over the whole run (monotone is then not a
    verdict about stability).
    """
    records = energy_records(trajectory)
    energies = np.array([r.energy for r in records])
    monotone = True
    max_violation = 0.0
    for before, after in zip(energies[:-1], energies[1:]):
        if after > before * (1.0 + tol):
            monotone = False
        if before > 0.0:
            max_violation = max(max_violation, (after - before) / before)
    if trajectory.problem.has_source:
        steps = np.arange(1, len(energies))
        growth = 0.0
        if steps.size:
            growth = float(
                np.max((energies[1:] - energies[0]) / (steps * trajectory.dt_nominal))
            )
        return EnergyAudit(
            monotone=monotone,
            max_violation=max_violation,
            records=records,
            mode="linear-growth",
            growth_fit=max(growth, 0.0),
        )
    return EnergyAudit(
        monotone=monotone,
        max_violation=max_violation,
        records=records,
        mode="monotone",
    )


# ---------------------------------------------------------------------------
# truncation errors


@dataclass(frozen=True)
class TruncationReport:
    a_norm: float
    b_norm: float
    dt: float
    dx: float
    epsilon: float


def truncation_errors(rho_fn, g_fn, problem, dt, n=0):
    """Residual norms from inserting an exact solution into the scheme.

    ``rho_fn(t, x)`` returns density values, ``g_fn(t, x)`` fluctuation
    values of shape (len(x), count) at the quadrature nodes. The micro
    residual is assembled in pre-multiplied form (eps^2 times the scheme
    row) so that the stiff terms cancel analytically instead of in
    floating point.
    """
    eps = problem.epsilon
    dx = problem.grid.dx
    grid = problem.grid
    vgrid = problem.vgrid
    v = vgrid.nodes
    t0 = n * dt
    t1 = t0 + dt

    rho0 = np.asarray(rho_fn(t0, grid.nodes), dtype=float)
    rho1 = np.asarray(rho_fn(t1, grid.nodes), dtype=float)
    g0 = np.asarray(g_fn(t0, grid.faces), dtype=float)
    g1 = np.asarray(g_fn(t1, grid.faces), dtype=float)

    flux1 = velocity.average(vgrid, g1 * v[None, :])
    a = (
        (rho1 - rho0) / dt
        + spatial.d_zero(flux1, dx)
        + problem.sigma_a_nodes * rho1
        - problem.source_nodes
    )

    upwind = spatial.upwind_transport(vgrid, g0, dx)
    b = (
        eps**2 * (g1 - g0) / dt
        + eps * spatial.project_fluctuation(vgrid, upwind)
        - problem.sigma_faces[:, None] * problem.operator.apply(g1)
        + spatial.delta_zero(rho0, dx)[:, None] * v[None, :]
    )

    a_norm = math.sqrt(float(np.sum(a * a) * dx))
    b_norm = math.sqrt(float(np.sum(velocity.average(vgrid, b * b)) * dx))
    return TruncationReport(a_norm=a_norm, b_norm=b_norm, dt=dt, dx=dx, epsilon=eps)


def fit_loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass
class TruncationScaling:
    reports: list
    exponent: float


def _mode_problem(epsilon, sigma, cells, nv, length):
    return scheme.make_problem(
        epsilon=epsilon,
        grid=spatial.make_grid(cells, length),
        vgrid=velocity.build_velocity_grid(nv),
        kernel=velocity.isotropic_kernel(),
        sigma=sigma,
    )


def truncation_dx_scaling(epsilon, cell_counts, dt, *, sigma=1.0, nv=8, length=1.0, k_index=1):
    """Refine dx at fixed (tiny) dt; the residual should scale ~ dx^2.

    Uses an exact Fourier mode of the velocity-discretized system as the
    inserted solution, so the measured residual is pure discretization.
    Meaningful for eps << dx, where the eps*dx upwind term is negligible.
    """
    k = 2.0 * math.pi * k_index / length
    problems = [_mode_problem(epsilon, sigma, n, nv, length) for n in cell_counts]
    mode = manufactured.semi_discrete_mode(problems[0].operator, epsilon, sigma, k)
    reports = [truncation_errors(mode.rho, mode.g, p, dt) for p in problems]
    slope = fit_loglog_slope(
        [p.grid.dx for p in problems], [r.a_norm + r.b_norm for r in reports]
    )
    return TruncationScaling(reports=reports, exponent=slope)


def truncation_dt_scaling(epsilon, dts, cells, *, sigma=1.0, nv=8, length=1.0, k_index=1):
    """Refine dt at fixed (fine) dx; the residual should scale ~ dt."""
    k = 2.0 * math.pi * k_index / length
    problem = _mode_problem(epsilon, sigma, cells, nv, length)
    mode = manufactured.semi_discrete_mode(problem.operator, epsilon, sigma, k)
    reports = [truncation_errors(mode.rho, mode.g, problem, dt) for dt in dts]
    slope = fit_loglog_slope(list(dts), [r.a_norm + r.b_norm for r in reports])
    return TruncationScaling(reports=reports, exponent=slope)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class ConvergenceRow:
    dx: float
    dt: float
    epsilon: float
    err_rho: float
    err_g: float
    order_rho: float = float("nan")
    order_g: float = float("nan")


@dataclass
class ConvergenceTable:
    rows: list

    @property
    def finest_order_rho(self):
        return self.rows[-1].order_rho

    @property
    def finest_order_g(self):
        return self.rows[-1].order_g


ERROR_CFL = "error"
ERROR_CFL_PARABOLIC = "error-parabolic"
STABILITY_CFL = "stability"


def study_dt(problem, rule):
    """Step-size rule for accuracy studies.

    ``error``: dt = sigma_min dx^2 / 6 + (2/3) eps dx (the accuracy bound),
    ``error-parabolic``: its dx^2 part only, ``stability``: the stability
    bound itself.
    """
    dx = problem.grid.dx
    if rule == ERROR_CFL:
        return problem.sigma_min * dx**2 / 6.0 + 2.0 / 3.0 * problem.epsilon * dx
    if rule == ERROR_CFL_PARABOLIC:
        return problem.sigma_min * dx**2 / 6.0
    if rule == STABILITY_CFL:
        return scheme.max_stable_dt(problem).dt_max
    raise ValueError(f"unknown dt rule {rule!r}")


def restrict_node_field(fine, refine):
    """Fine integer-node values at the coincident coarse nodes."""
    return fine[::refine]


def restrict_face_field(fine, refine):
    """Average of the two fine faces straddling each coarse face."""
    half = refine // 2
    return 0.5 * (fine[half - 1 :: refine] + fine[half::refine])


def convergence_study(
    problem_factory,
    f0,
    final_time,
    cell_counts,
    *,
    dt_rule=ERROR_CFL,
    refine=4,
):
    """Self-convergence against a ``refine``-times finer run of the scheme.

    ``problem_factory(cells)`` builds the problem at one resolution; the
    same kinetic initial data ``f0(x, v)`` is decomposed on every grid.
    Errors are measured at the final time in the norms of the error
    estimate: sum |rho_ref - rho| dx and eps * sum <|g_ref - g|> dx, with
    the reference restricted onto the coarse grid. Orders are consecutive
    -pair log2 ratios; judge the finest pair (coarse grids may be
    pre-asymptotic).
    """
    cell_counts = list(cell_counts)
    if len(cell_counts) < 3:
        raise ValueError("a convergence study needs at least 3 resolutions")
    if any(b <= a for a, b in zip(cell_counts, cell_counts[1:])):
        raise ValueError("cell counts must be strictly increasing")
    if refine % 2 != 0:
        raise ValueError("refinement ratio must be even to align the staggered grids")

    rows = []
    for cells in cell_counts:
        problem = problem_factory(cells)
        ref_problem = problem_factory(refine * cells)
        dt = study_dt(problem, dt_rule)
        dt_ref = study_dt(ref_problem, dt_rule)
        traj = scheme.run(
            problem, final_time=final_time, f0=f0, dt=dt, keep_states=False
        )
        ref = scheme.run(
            ref_problem, final_time=final_time, f0=f0, dt=dt_ref, keep_states=False
        )
        rho_ref = restrict_node_field(ref.final.rho, refine)
        g_ref = restrict_face_field(ref.final.g, refine)
        dx = problem.grid.dx
        err_rho = float(np.sum(np.abs(rho_ref - traj.final.rho)) * dx)
        err_g = problem.epsilon * float(
            np.sum(velocity.average(problem.vgrid, np.abs(g_ref - traj.final.g))) * dx
        )
        rows.append(
            ConvergenceRow(
                dx=dx, dt=dt, epsilon=problem.epsilon, err_rho=err_rho, err_g=err_g
            )
        )

    def order(prev, cur, prev_dx, cur_dx):
        if prev <= 0.0 or cur <= 0.0:
            return float("nan")
        return math.log(prev / cur) / math.log(prev_dx / cur_dx)

    for i in range(1, len(rows)):
        prev, cur = rows[i - 1], rows[i]
        rows[i] = ConvergenceRow(
            dx=cur.dx,
            dt=cur.dt,
            epsilon=cur.epsilon,
            err_rho=cur.err_rho,
            err_g=cur.err_g,
            order_rho=order(prev.err_rho, cur.err_rho, prev.dx, cur.dx),
            order_g=order(prev.err_g, cur.err_g, prev.dx, cur.dx),
        )
    return ConvergenceTable(rows=rows)


# ---------------------------------------------------------------------------
# Taylor finite-difference bounds with explicit constants


@dataclass(frozen=True)
class SmoothFunction:
    """Periodic test function with analytically known Sobolev norms."""

    name: str
    f: callable
    d1: callable
    d2: callable
    d3: callable
    l2_sq: float
    d1_l2_sq: float
    d2_l2_sq: float
    d3_l2_sq: float

    @property
    def h1_sq(self):
        return self.l2_sq + self.d1_l2_sq


def sine_mode(length=1.0, harmonics=((1.0, 1),)):
    """sum_j a_j sin(2 pi m_j x / L); norms add by orthogonality."""
    ks = [(a, 2.0 * math.pi * m / length) for a, m in harmonics]

    def deriv(order):
        def val(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for a, k in ks:
                phase = k * x + order * math.pi / 2.0
                out += a * k**order * np.sin(phase)
            return out

        return val

    def norm_sq(order):
        return sum(a**2 * k ** (2 * order) * length / 2.0 for a, k in ks)

    name = "+".join(f"{a:g}*sin(2pi*{m}x/L)" for a, m in harmonics)
    return SmoothFunction(
        name=name,
        f=deriv(0),
        d1=deriv(1),
        d2=deriv(2),
        d3=deriv(3),
        l2_sq=norm_sq(0),
        d1_l2_sq=norm_sq(1),
        d2_l2_sq=norm_sq(2),
        d3_l2_sq=norm_sq(3),
    )


def mixed_mode(length=1.0):
    """sin(2 pi x) + 0.2 cos(6 pi x) on the unit period."""
    k1 = 2.0 * math.pi / length
    k2 = 6.0 * math.pi / length

    def deriv(order):
        def val(x):
            x = np.asarray(x, dtype=float)
            shift = order * math.pi / 2.0
            return k1**order * np.sin(k1 * x + shift) + 0.2 * k2**order * np.cos(
                k2 * x + shift
            )

        return val

    def norm_sq(order):
        return (k1 ** (2 * order) + 0.04 * k2 ** (2 * order)) * length / 2.0

    return SmoothFunction(
        name="sin(2pi x)+0.2cos(6pi x)",
        f=deriv(0),
        d1=deriv(1),
        d2=deriv(2),
        d3=deriv(3),
        l2_sq=norm_sq(0),
        d1_l2_sq=norm_sq(1),
        d2_l2_sq=norm_sq(2),
        d3_l2_sq=norm_sq(3),
    )


@dataclass(frozen=True)
class TimeFunction:
    """C^2 function of time with known derivative maxima on [0, horizon]."""

    name: str
    psi: callable
    dpsi: callable
    max_d1: float
    max_d2: float
    horizon: float


def cosine_time_function():
    return TimeFunction(
        name="cos(3t)",
        psi=lambda t: np.cos(3.0 * t),
        dpsi=lambda t: -3.0 * np.sin(3.0 * t),
        max_d1=3.0,
        max_d2=9.0,
        horizon=1.0,
    )


@dataclass(frozen=True)
class BoundCheck:
    lemma: str
    subject: str
    resolution: str
    lhs: float
    rhs: float

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0.0 else float("inf")

    @property
    def passed(self):
        return self.lhs <= self.rhs


def verify_appendix_bounds(
    functions=None,
    cell_counts=(32, 64, 128),
    time_functions=None,
    dts=(0.1, 0.05, 0.025),
    length=1.0,
):
    """Check the Taylor-bound lemmas with their stated constants.

    Space clauses, per test function and grid (forward difference dphi):
      (i)   sum phi(x_i)^2 dx          <= 2 |phi|_{H1}^2        (dx <= 1)
      (ii)  sum |dphi_i - phi'(x_i)|^2 dx       <= dx^2/3  |phi''|^2
      (iii) sum |dphi_i - phi'(x_{i+1/2})|^2 dx <= dx^4/320 |phi'''|^2
    Time clauses, per function and step:
      (i)   |psi(t_{n+1}) - psi(t_n)|           <= dt max|psi'|
      (ii)  |difference quotient - psi'(t_n)|   <= dt max|psi''|
    """
    if functions is None:
        functions = [sine_mode(length), mixed_mode(length)]
    if time_functions is None:
        time_functions = [cosine_time_function()]

    checks = []
    for fn in functions:
        for cells in cell_counts:
            grid = spatial.make_grid(cells, length)
            if grid.dx > 1.0:
                raise ValueError("space clauses need dx <= 1")
            x = grid.nodes
            vals = fn.f(x)
            fd = (fn.f(x + grid.dx) - vals) / grid.dx
            checks.append(
                BoundCheck(
                    lemma="A.2(i)",
                    subject=fn.name,
                    resolution=f"N={cells}",
                    lhs=float(np.sum(vals**2) * grid.dx),
                    rhs=2.0 * fn.h1_sq,
                )
            )
            checks.append(
                BoundCheck(
                    lemma="A.2(ii)",
                    subject=fn.name,
                    resolution=f"N={cells}",
                    lhs=float(np.sum((fd - fn.d1(x)) ** 2) * grid.dx),
                    rhs=grid.dx**2 / 3.0 * fn.d2_l2_sq,
                )
            )
            checks.append(
                BoundCheck(
                    lemma="A.2(iii)",
                    subject=fn.name,
                    resolution=f"N={cells}",
                    lhs=float(np.sum((fd - fn.d1(grid.faces)) ** 2) * grid.dx),
                    rhs=grid.dx**4 / 320.0 * fn.d3_l2_sq,
                )
            )
    for tf in time_functions:
        for dt in dts:
            t = np.arange(0.0, tf.horizon - dt + 1e-12, dt)
            jumps = np.abs(tf.psi(t + dt) - tf.psi(t))
            fd_err = np.abs((tf.psi(t + dt) - tf.psi(t)) / dt - tf.dpsi(t))
            checks.append(
                BoundCheck(
                    lemma="A.1(i)",
                    subject=tf.name,
                    resolution=f"dt={dt:g}",
                    lhs=float(jumps.max()),
                    rhs=dt * tf.max_d1,
                )
            )
            checks.append(
                BoundCheck(
                    lemma="A.1(ii)",
                    subject=tf.name,
                    resolution=f"dt={dt:g}",
                    lhs=float(fd_err.max()),
                    rhs=dt * tf.max_d2,
                )
            )
    return checks


# ---------------------------------------------------------------------------
# discrete operator lemmas on random fields


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    max_defect: float
    tolerance: float

    @property
    def passed(self):
        return self.max_defect <= self.tolerance


def _inner(vgrid, phi, psi, dx):
    return float(np.sum(velocity.average(vgrid, phi * psi)) * dx)


def lemma_suite(seed=1, n_fields=100, cells=64, nv=8, length=1.0):
    """Identity and inequality checks on seeded random face fields.

    Identities hold to 1e-13 relative on the periodic grid; inequalities
    get the same slack on top of their right-hand sides.
    """
    grid = spatial.make_grid(cells, length)
    vgrid = velocity.build_velocity_grid(nv)
    dx = grid.dx
    v = vgrid.nodes
    v_pos = np.maximum(v, 0.0)
    v_neg = np.minimum(v, 0.0)
    gen = Lcg(seed)
    tol = 1e-13

    upwind_defect = 0.0
    sbp_defect = 0.0
    dplus_defect = 0.0
    adjoint_defect = 0.0
    cauchy_defect = 0.0
    for _ in range(n_fields):
        phi = gen.symmetric(cells, nv)
        psi = gen.symmetric(cells, nv)
        mu = gen.symmetric(cells)

        lhs = spatial.upwind_transport(vgrid, phi, dx)
        rhs = v[None, :] * spatial.d_center(phi, dx) - 0.5 * dx * np.abs(v)[
            None, :
        ] * spatial.d_minus(spatial.d_plus(phi, dx), dx)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0)
        upwind_defect = max(upwind_defect, float(np.abs(lhs - rhs).max()) / scale)

        flux = velocity.average(vgrid, phi * v[None, :])
        s1 = np.sum(mu * spatial.d_zero(flux, dx)) * dx
        s1 += np.sum(spatial.delta_zero(mu, dx) * flux) * dx
        s2 = _inner(vgrid, psi, spatial.d_minus(phi, dx), dx)
        s2 += _inner(vgrid, spatial.d_plus(psi, dx), phi, dx)
        s3 = _inner(vgrid, phi, spatial.d_center(phi, dx), dx)
        field_scale = max(np.abs(phi).max(), np.abs(psi).max(), np.abs(mu).max(), 1.0)
        sum_scale = field_scale**2 * length / dx
        sbp_defect = max(
            sbp_defect, max(abs(s1), abs(s2), abs(s3)) / sum_scale
        )

        dplus = spatial.d_plus(phi, dx)
        lhs_ineq = float(np.sum(velocity.average(vgrid, dplus**2)) * dx)
        rhs_ineq = 4.0 / dx**2 * float(np.sum(velocity.average(vgrid, phi**2)) * dx)
        dplus_defect = max(dplus_defect, max(0.0, lhs_ineq - rhs_ineq) / rhs_ineq)

        adjoint = v_pos[None, :] * spatial.d_plus(psi, dx) + v_neg[None, :] * spatial.d_minus(psi, dx)
        pairing = abs(_inner(vgrid, adjoint, phi, dx))
        weighted = float(
            np.sum(velocity.average(vgrid, (np.abs(v)[None, :] * spatial.d_plus(psi, dx)) ** 2)) * dx
        )
        phi_sq = float(np.sum(velocity.average(vgrid, phi**2)) * dx)
        for alpha in (0.5, 1.0, 2.0):
            bound = alpha * phi_sq + weighted / (4.0 * alpha)
            adjoint_defect = max(
                adjoint_defect, max(0.0, pairing - bound) / max(bound, 1e-300)
            )

        gvec = gen.symmetric(nv)
        lhs_cs = velocity.average(vgrid, v * gvec) ** 2
        rhs_cs = 0.5 * velocity.average(vgrid, np.abs(v) * gvec**2)
        cauchy_defect = max(cauchy_defect, max(0.0, lhs_cs - rhs_cs) / max(rhs_cs, 1e-300))

    return [
        LemmaCheck("upwind-centered-form", upwind_defect, tol),
        LemmaCheck("summation-by-parts", sbp_defect, tol),
        LemmaCheck("forward-difference-bound", dplus_defect, tol),
        LemmaCheck("adjoint-upwind-bound", adjoint_defect, tol),
        LemmaCheck("flux-cauchy-schwarz", cauchy_defect, tol),
    ]


# ---------------------------------------------------------------------------
# step-size sweep around the stability bound


@dataclass(frozen=True)
class CflSweepRow:
    multiplier: float
    monotone: bool
    growth_rate: float
    steps_completed: int


def cfl_sweep(problem, multipliers, n_steps, seed=1):
    """Run at dt = m * dt_max and report the energy behaviour per m.

    The stability bound is sufficient, not necessary: rows with m <= 1
    must be monotone, rows above the bound are reported without verdict.
    The growth rate is the least-squares slope of log E over the second
    half of the completed steps (transients skipped); blow-ups give inf.
    """
    dt_max = scheme.max_stable_dt(problem).dt_max
    rows = []
    for m in multipliers:
        if not m > 0.0:
            raise ValueError(f"multipliers must be positive, got {m}")
        state = scheme.random_state(problem, seed)
        dt = m * dt_max
        history = [scheme._energy_parts(state, problem)[2]]
        blew_up = False
        for _ in range(int(n_steps)):
            try:
                state = scheme.step(state, problem, dt)
            except (NumericalFailureError, ValueError):
                blew_up = True
                break
            history.append(scheme._energy_parts(state, problem)[2])
        energies = np.array(history)
        if energies.size and not np.all(np.isfinite(energies)):
            energies = energies[: int(np.argmax(~np.isfinite(energies)))]
            blew_up = True

        if blew_up or energies.size < 2:
            rows.append(
                CflSweepRow(
                    multiplier=float(m),
                    monotone=False if blew_up else True,
                    growth_rate=float("inf") if blew_up else 0.0,
                    steps_completed=max(0, energies.size - 1),
                )
            )
            continue
        monotone = bool(
            np.all(energies[1:] <= energies[:-1] * (1.0 + 1e-12))
        )
        tail = energies[energies.size // 2 :]
        steps = np.arange(energies.size)[energies.size // 2 :]
        positive = tail > 0.0
        if positive.sum() >= 2:
            rate = float(np.polyfit(steps[positive], np.log(tail[positive]), 1)[0])
        else:
            rate = float("-inf")
        rows.append(
            CflSweepRow(
                multiplier=float(m),
                monotone=monotone,
                growth_rate=rate,
                steps_completed=energies.size - 1,
            )
        )
    return rows
