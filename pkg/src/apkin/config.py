"""Flat sectioned key/value run configurations.

Format: UTF-8 text, one ``section.key = value`` per line, ``#`` comments,
blank lines ignored. Constants only (coefficient fields take numbers; the
library API accepts callables). Example:

    problem.epsilon = 1e-2
    problem.kernel = isotropic
    problem.velocity_nodes = 8
    grid.cells = 64
    grid.length = 1.0
    time.final = 0.1

Kernel specs: ``isotropic``, ``telegraph``, ``linear-anisotropic:BETA``
(s = (1 + BETA v v')/2), or ``table:PATH`` with a whitespace-separated
count x count matrix of node-pair values.
"""

import math
from dataclasses import dataclass, fields

import numpy as np

from . import scheme, spatial, velocity
from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    epsilon: float
    velocity_nodes: int
    cells: int
    length: float
    final_time: float
    kernel: str = "isotropic"
    velocity_rule: str = velocity.GAUSS_LEGENDRE
    sigma: float = 1.0
    sigma_a: float = 0.0
    source: float = 0.0
    absorption_mode: str = scheme.IMPLICIT
    dt_policy: str = "auto-cfl"
    steps: int = 500
    init_profile: str = "sine"
    init_mean: float = 1.0
    init_amplitude: float = 0.5
    output_directory: str = "out"
    limit_tolerance: float = 1e-6


def _parse_float(text):
    try:
        value = float(text)
    except ValueError as exc:
        raise ValueError(f"not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"number must be finite: {text!r}")
    return value


def _parse_int(text):
    try:
        return int(text)
    except ValueError as exc:
        raise ValueError(f"not an integer: {text!r}") from exc


def _check_epsilon(value):
    if value < scheme.EPSILON_FLOOR:
        raise ValueError(
            f"epsilon must be at least {scheme.EPSILON_FLOOR:g} "
            f"(the eps = 0 limit is served by the diffusion reference), got {value:g}"
        )
    return value


def _check_sigma(value):
    if not value > 0.0:
        raise ValueError(
            f"cross section must satisfy 0 < sigma_m <= sigma(x), got {value:g}"
        )
    return value


def _check_sigma_a(value):
    if value < 0.0:
        raise ValueError(f"absorption must satisfy 0 <= sigma_a(x), got {value:g}")
    return value


def _check_nodes(value):
    if value < 2 or value % 2 != 0:
        raise ValueError(f"velocity node count must be even and >= 2, got {value}")
    return value


def _check_cells(value):
    if value < 4:
        raise ValueError(f"grid needs at least 4 cells, got {value}")
    return value


def _check_positive(value):
    if not value > 0.0:
        raise ValueError(f"value must be positive, got {value:g}")
    return value


def _check_non_negative(value):
    if value < 0.0:
        raise ValueError(f"value must be non-negative, got {value:g}")
    return value


def _check_choice(*choices):
    def check(value):
        if value not in choices:
            raise ValueError(f"expected one of {choices}, got {value!r}")
        return value

    return check


def _check_kernel(value):
    if value in ("isotropic", "telegraph"):
        return value
    if value.startswith("linear-anisotropic:"):
        beta = _parse_float(value.split(":", 1)[1])
        if not abs(beta) < 1.0:
            raise ValueError(f"anisotropy coefficient needs |beta| < 1, got {beta:g}")
        return value
    if value.startswith("table:") and value.split(":", 1)[1]:
        return value
    raise ValueError(
        f"kernel must be isotropic, telegraph, linear-anisotropic:BETA or "
        f"table:PATH, got {value!r}"
    )


def _check_dt_policy(value):
    if value == "auto-cfl":
        return value
    if value.startswith("fixed:"):
        _check_positive(_parse_float(value.split(":", 1)[1]))
        return value
    raise ValueError(f"dt policy must be auto-cfl or fixed:DT, got {value!r}")


def _identity(value):
    return value


# key -> (field name, raw parser, validator, required)
_KEYS = {
    "problem.epsilon": ("epsilon", _parse_float, _check_epsilon, True),
    "problem.kernel": ("kernel", str, _check_kernel, False),
    "problem.velocity_nodes": ("velocity_nodes", _parse_int, _check_nodes, True),
    "problem.velocity_rule": (
        "velocity_rule",
        str,
        _check_choice(velocity.GAUSS_LEGENDRE, velocity.TWO_POINT_TELEGRAPH),
        False,
    ),
    "problem.sigma": ("sigma", _parse_float, _check_sigma, False),
    "problem.sigma_a": ("sigma_a", _parse_float, _check_sigma_a, False),
    "problem.source": ("source", _parse_float, _identity, False),
    "problem.absorption_mode": (
        "absorption_mode",
        str,
        _check_choice(scheme.IMPLICIT, scheme.EXPLICIT),
        False,
    ),
    "grid.cells": ("cells", _parse_int, _check_cells, True),
    "grid.length": ("length", _parse_float, _check_positive, True),
    "time.final": ("final_time", _parse_float, _check_non_negative, True),
    "time.dt_policy": ("dt_policy", str, _check_dt_policy, False),
    "time.steps": ("steps", _parse_int, _check_non_negative, False),
    "init.profile": (
        "init_profile",
        str,
        _check_choice("sine", "constant", "random"),
        False,
    ),
    "init.mean": ("init_mean", _parse_float, _identity, False),
    "init.amplitude": ("init_amplitude", _parse_float, _identity, False),
    "output.directory": ("output_directory", str, _identity, False),
    "limit.tolerance": ("limit_tolerance", _parse_float, _check_positive, False),
}

_FIELD_TO_KEY = {spec[0]: key for key, spec in _KEYS.items()}


def parse_config(text):
    """Parse and fully validate a configuration, with line-precise errors."""
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'section.key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in seen:
            raise ConfigError(
                f"duplicate key (first set on line {seen[key]})", line=lineno, key=key
            )
        seen[key] = lineno
        field_name, parser, validator, _ = _KEYS[key]
        try:
            values[field_name] = validator(parser(value))
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, key=key) from exc

    for key, (field_name, _, _, required) in _KEYS.items():
        if required and field_name not in values:
            raise ConfigError("missing required key", key=key)

    config = RunConfig(**values)
    if config.velocity_rule == velocity.TWO_POINT_TELEGRAPH and config.velocity_nodes != 2:
        raise ConfigError(
            "two-point-telegraph rule requires velocity_nodes = 2",
            key="problem.velocity_rule",
        )
    return config


def render_config(config):
    """Canonical text form; parse_config(render_config(c)) == c."""
    lines = []
    for f in fields(RunConfig):
        key = _FIELD_TO_KEY[f.name]
        value = getattr(config, f.name)
        if isinstance(value, float):
            text = f"{value:.17g}"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    lines.sort()
    return "\n".join(lines) + "\n"


def build_kernel(config, vgrid):
    if config.kernel == "isotropic":
        return velocity.isotropic_kernel()
    if config.kernel == "telegraph":
        return velocity.telegraph_kernel()
    if config.kernel.startswith("linear-anisotropic:"):
        return velocity.linear_anisotropic_kernel(float(config.kernel.split(":", 1)[1]))
    path = config.kernel.split(":", 1)[1]
    try:
        table = np.loadtxt(path)
    except OSError as exc:
        raise ConfigError(f"cannot read kernel table: {exc}", key="problem.kernel") from exc
    return velocity.table_kernel(vgrid, np.atleast_2d(table))


def build_problem(config):
    """Build the transport problem a configuration describes."""
    vgrid = velocity.build_velocity_grid(config.velocity_nodes, config.velocity_rule)
    return scheme.make_problem(
        epsilon=config.epsilon,
        grid=spatial.make_grid(config.cells, config.length),
        vgrid=vgrid,
        kernel=build_kernel(config, vgrid),
        sigma=config.sigma,
        sigma_a=config.sigma_a,
        source=config.source,
        absorption_mode=config.absorption_mode,
    )


def initial_state(config, problem, seed):
    """Initial micro-macro state for the configured profile.

    ``sine`` and ``constant`` are isotropic (well-prepared) kinetic data;
    ``random`` draws from the documented LCG at the given seed.
    """
    if config.init_profile == "random":
        return scheme.random_state(problem, seed)
    if config.init_profile == "sine":
        two_pi = 2.0 * math.pi / config.length

        def f0(x, v):
            return (config.init_mean + config.init_amplitude * np.sin(two_pi * x)) * np.ones_like(v)

    else:

        def f0(x, v):
            return np.full(np.broadcast(x, v).shape, config.init_mean)

    return scheme.decompose_initial(problem, f0)


def nominal_dt(config, problem):
    """Step size selected by the configured policy."""
    if config.dt_policy == "auto-cfl":
        return scheme.max_stable_dt(problem).dt_max
    return float(config.dt_policy.split(":", 1)[1])
