"""Experiment command line: ``apkin SUBCOMMAND [--config PATH] ...``.

Subcommands: ``run`` (advance the solver, emit energy/density artifacts),
``cfl`` (print the step-size report, optionally sweep multipliers),
``convergence`` (self-convergence table), ``energy-audit`` (seeded random
data, per-step energy check), ``limit-check`` (solver against the
diffusion-limit reference at small eps), ``verify-lemmas`` (discrete
lemma and Taylor-bound suite).

Exit codes: 0 all checks passed, 1 an assertion or configuration failed,
2 a solver numerical failure. CSV artifacts are comma-separated with 17
significant digits, LF endings, a header row, and one leading comment
line recording the config hash and code version; files are written
atomically (temp file + rename). A JSON summary accompanies each run.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod, diagnostics, reference, scheme, velocity
from .errors import ConfigError, NumericalFailureError

DEFAULT_SEED = 1


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows, provenance):
    lines = [f"# {provenance}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _provenance(config_text):
    digest = hashlib.sha256(config_text.encode("utf-8")).hexdigest()
    return f"config_sha256={digest} version={__version__}"


def _load_config(args):
    if not args.config:
        raise ConfigError("this command needs --config PATH")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return config_mod.parse_config(text), text


def _out_dir(args, cfg):
    return Path(args.out) if args.out else Path(cfg.output_directory)


def _energy_rows(traj):
    rows = []
    for i, (rho_sq, g_sq, total) in enumerate(traj.energy_history):
        t = min(i * traj.dt_nominal, traj.final.time)
        rows.append((i, t, rho_sq, g_sq, total))
    return rows


def cmd_run(args):
    cfg, text = _load_config(args)
    problem = config_mod.build_problem(cfg)
    state0 = config_mod.initial_state(cfg, problem, args.seed)
    dt = config_mod.nominal_dt(cfg, problem)
    traj = scheme.run(
        problem,
        final_time=cfg.final_time,
        state0=state0,
        dt=dt,
        keep_states=False,
        record_energy=True,
    )
    out = _out_dir(args, cfg)
    prov = _provenance(text)
    _write_csv(
        out / "energy.csv",
        ("step", "time", "rho_norm_sq", "g_norm_sq", "energy"),
        _energy_rows(traj),
        prov,
    )
    _write_csv(
        out / "rho_final.csv",
        ("x", "rho"),
        list(zip(problem.grid.nodes, traj.final.rho)),
        prov,
    )
    summary = {
        "command": "run",
        "version": __version__,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "epsilon": cfg.epsilon,
        "cells": cfg.cells,
        "dt": dt,
        "steps": traj.final.step_index,
        "final_time": traj.final.time,
        "energy_initial": traj.energy_history[0][2],
        "energy_final": traj.energy_history[-1][2],
        "dt_exceeded_cfl": traj.dt_exceeded_cfl,
        "initial_layer": traj.initial_layer,
    }
    _write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"run: {traj.final.step_index} steps to t = {_fmt(traj.final.time)}, artifacts in {out}")
    return 0


def cmd_cfl(args):
    cfg, text = _load_config(args)
    problem = config_mod.build_problem(cfg)
    report = scheme.max_stable_dt(problem)
    print(f"dt_max = {_fmt(report.dt_max)}")
    print(f"sigma_tilde = {_fmt(report.sigma_tilde)}")
    print(f"mode = {report.mode}")
    print(f"binding_term = {report.binding_term}")
    if args.multipliers:
        multipliers = [float(m) for m in args.multipliers.split(",")]
        rows = diagnostics.cfl_sweep(problem, multipliers, args.steps, seed=args.seed)
        out = _out_dir(args, cfg)
        _write_csv(
            out / "cfl.csv",
            ("multiplier", "monotone", "growth_rate"),
            [(r.multiplier, r.monotone, r.growth_rate) for r in rows],
            _provenance(text),
        )
        for r in rows:
            print(
                f"sweep m={_fmt(r.multiplier)}: monotone={r.monotone} "
                f"growth_rate={_fmt(r.growth_rate)}"
            )
        if any(not r.monotone for r in rows if r.multiplier <= 1.0):
            print("FAIL: non-monotone energy at or below the stability bound")
            return 1
    return 0


def cmd_convergence(args):
    import dataclasses

    cfg, text = _load_config(args)
    cells = [int(c) for c in args.resolutions.split(",")]
    if cfg.init_profile == "random":
        raise ConfigError("convergence studies need a deterministic init profile")

    def factory(n):
        return config_mod.build_problem(dataclasses.replace(cfg, cells=n))

    two_pi = 2.0 * np.pi / cfg.length

    def f0(x, v):
        if cfg.init_profile == "constant":
            return np.full(np.broadcast(x, v).shape, cfg.init_mean)
        return (cfg.init_mean + cfg.init_amplitude * np.sin(two_pi * x)) * np.ones_like(v)

    table = diagnostics.convergence_study(
        factory, f0, cfg.final_time, cells, dt_rule=args.dt_rule
    )
    out = _out_dir(args, cfg)
    _write_csv(
        out / "convergence.csv",
        ("dx", "dt", "epsilon", "err_rho", "err_g", "order_rho", "order_g"),
        [
            (r.dx, r.dt, r.epsilon, r.err_rho, r.err_g, r.order_rho, r.order_g)
            for r in table.rows
        ],
        _provenance(text),
    )
    for r in table.rows:
        print(
            f"dx={_fmt(r.dx)} dt={_fmt(r.dt)} err_rho={_fmt(r.err_rho)} "
            f"order_rho={_fmt(r.order_rho)}"
        )
    return 0


def cmd_energy_audit(args):
    cfg, text = _load_config(args)
    problem = config_mod.build_problem(cfg)
    state0 = scheme.random_state(problem, args.seed)
    traj = scheme.run(
        problem,
        n_steps=cfg.steps,
        state0=state0,
        keep_states=False,
        record_energy=True,
    )
    audit = diagnostics.audit_energy(traj)
    out = _out_dir(args, cfg)
    _write_csv(
        out / "energy.csv",
        ("step", "time", "rho_norm_sq", "g_norm_sq", "energy"),
        [
            (r.step_index, r.step_index * traj.dt_nominal, r.rho_norm_sq, r.g_norm_sq, r.energy)
            for r in audit.records
        ],
        _provenance(text),
    )
    if audit.mode == "linear-growth":
        print(f"energy audit: linear-growth mode, fitted rate {_fmt(audit.growth_fit)}")
        return 0
    print(
        f"energy audit: monotone={audit.monotone} "
        f"max_violation={_fmt(audit.max_violation)} over {cfg.steps} steps"
    )
    if not audit.monotone:
        print("FAIL: energy estimate violated")
        return 1
    return 0


def cmd_limit_check(args):
    cfg, text = _load_config(args)
    problem = config_mod.build_problem(cfg)
    state0 = config_mod.initial_state(cfg, problem, args.seed)
    dp = reference.diffusion_problem_from_transport(problem)
    dt = min(scheme.max_stable_dt(problem).dt_max, reference.diffusion_dt_bound(dp))
    traj = scheme.run(
        problem, final_time=cfg.final_time, state0=state0, dt=dt, keep_states=False
    )
    diff_traj = reference.run_diffusion(
        dp, state0.rho, dt, cfg.final_time, keep_states=False
    )
    gap = float(np.abs(traj.final.rho - diff_traj.final).max())
    out = _out_dir(args, cfg)
    _write_csv(
        out / "limit_check.csv",
        ("x", "rho_solver", "rho_diffusion", "difference"),
        list(
            zip(
                problem.grid.nodes,
                traj.final.rho,
                diff_traj.final,
                traj.final.rho - diff_traj.final,
            )
        ),
        _provenance(text),
    )
    print(
        f"limit check: max |rho_solver - rho_diffusion| = {_fmt(gap)} "
        f"(tolerance {_fmt(cfg.limit_tolerance)})"
    )
    if gap > cfg.limit_tolerance:
        print("FAIL: diffusion-limit agreement outside tolerance")
        return 1
    return 0


def cmd_verify_lemmas(args):
    failures = 0
    for check in diagnostics.lemma_suite(seed=args.seed):
        status = "PASS" if check.passed else "FAIL"
        print(
            f"{status} {check.name}: max defect {_fmt(check.max_defect)} "
            f"(tolerance {_fmt(check.tolerance)})"
        )
        failures += not check.passed
    for check in diagnostics.verify_appendix_bounds():
        status = "PASS" if check.passed else "FAIL"
        print(
            f"{status} {check.lemma} [{check.subject}, {check.resolution}]: "
            f"lhs/rhs = {_fmt(check.ratio)}"
        )
        failures += not check.passed
    return 0 if failures == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="apkin",
        description="Micro-macro kinetic transport experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=False, help="configuration file path")
        p.add_argument("--out", default=None, help="artifact directory")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="LCG seed")

    p = sub.add_parser("run", help="advance the solver, write artifacts")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cfl", help="print the step-size report")
    common(p)
    p.add_argument("--multipliers", default=None, help="sweep dt multipliers, e.g. 0.5,1,5")
    p.add_argument("--steps", type=int, default=300, help="sweep run length")
    p.set_defaults(func=cmd_cfl)

    p = sub.add_parser("convergence", help="self-convergence table")
    common(p)
    p.add_argument("--resolutions", default="32,64,128", help="comma-separated cell counts")
    p.add_argument(
        "--dt-rule",
        default=diagnostics.ERROR_CFL,
        choices=(diagnostics.ERROR_CFL, diagnostics.ERROR_CFL_PARABOLIC, diagnostics.STABILITY_CFL),
    )
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("energy-audit", help="seeded random-data energy check")
    common(p)
    p.set_defaults(func=cmd_energy_audit)

    p = sub.add_parser("limit-check", help="solver vs diffusion reference")
    common(p)
    p.set_defaults(func=cmd_limit_check)

    p = sub.add_parser("verify-lemmas", help="discrete lemma and Taylor-bound suite")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_verify_lemmas)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
