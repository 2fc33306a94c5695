"""INI run configuration with fail-fast validation.

Sections ``[grid]``, ``[model]``, ``[scheme]`` and ``[run]``.  Every time
and step is checked for alignment with the cell width while parsing, and
errors name the offending key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

import numpy as np

from .lp_grid import AgeGrid, GridAlignmentError, GridFunction
from .model import ModelParams, constant_on_support
from .scheme import SchemeConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "DEFAULT_INI"]

DEFAULT_INI = """\
[grid]
delta_a = 0.01
a_max = 10
p = 2

[model]
n = 1
kappa = 1
beta = const_on_support
beta_level = 1.5
a_dagger = 2
mu = 0.5
x0 = bump
x0_amplitude = 0.05
x0_center = 2.5
x0_halfwidth = 1.5

[scheme]
epsilon = 0.05
tau = 2
gamma = 0
max_knots = 100000
probes = 8

[run]
seed = 12345
levels = 4
convergence_epsilon = 0.1
compare_tau = 1
picard_iters = 200
delta_trials = 32
subtangency_h = 0.08, 0.04, 0.02, 0.01
subtangency_states = 10
"""


class ConfigError(ValueError):
    """Schema violation; ``key`` names the offending entry."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"[{key}] {reason}")
        self.key = key
        self.reason = reason


@dataclass(frozen=True, eq=False)
class RunConfig:
    grid: AgeGrid
    params: ModelParams
    x0: GridFunction
    scheme: SchemeConfig
    seed: int
    levels: int
    convergence_epsilon: float
    compare_tau: float
    picard_iters: int
    delta_trials: int
    subtangency_h: tuple
    subtangency_states: int
    echo: dict


_KNOWN = {
    "grid": {"delta_a", "a_max", "p"},
    "model": {"n", "kappa", "beta", "beta_level", "beta_table", "a_dagger", "mu", "mu_table",
              "x0", "x0_amplitude", "x0_center", "x0_halfwidth", "x0_rate", "x0_level",
              "x0_table"},
    "scheme": {"epsilon", "tau", "gamma", "rho", "eta_min", "max_knots", "probes"},
    "run": {"seed", "levels", "convergence_epsilon", "compare_tau", "picard_iters", "delta_trials", "subtangency_h",
            "subtangency_states"},
}


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def raw(self, sec, key, default=None, required=False):
        if self.cp.has_option(sec, key):
            return self.cp.get(sec, key).strip()
        if required:
            raise ConfigError(f"{sec}.{key}", "missing required key")
        return default

    def num(self, sec, key, default=None, required=False, cast=float):
        v = self.raw(sec, key, None, required)
        if v is None:
            return default
        try:
            out = cast(v)
        except ValueError:
            raise ConfigError(f"{sec}.{key}", f"cannot parse {v!r} as {cast.__name__}") from None
        if cast is float and not np.isfinite(out):
            raise ConfigError(f"{sec}.{key}", "must be finite")
        return out


def _aligned(grid: AgeGrid, value: float, key: str) -> float:
    try:
        grid.steps(value)
    except GridAlignmentError as exc:
        raise ConfigError(key, str(exc)) from None
    return value


def _table(grid: AgeGrid, text: str, key: str) -> np.ndarray:
    """``"a0:v0, a1:v1, ..."`` as a step profile starting at ``a0 = 0``."""
    try:
        pairs = [tuple(float(s) for s in item.split(":")) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(key, "table entries must read age:value") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ConfigError(key, "table entries must read age:value")
    ages = [a for a, _ in pairs]
    if ages[0] != 0 or any(b <= a for a, b in zip(ages, ages[1:])):
        raise ConfigError(key, "table ages must start at 0 and increase")
    for a in ages:
        _aligned(grid, a, key)
    out = np.zeros(grid.n_cells)
    for a, v in pairs:
        out[grid.steps(a):] = v
    return out


def _x0(r: _Reader, grid: AgeGrid, n: int, kappa: float) -> np.ndarray:
    kind = r.raw("model", "x0", "bump")
    a = grid.midpoints
    if kind == "bump":
        amp = r.num("model", "x0_amplitude", 0.05)
        c = r.num("model", "x0_center", 2.5)
        w = r.num("model", "x0_halfwidth", 1.5)
        if not w > 0:
            raise ConfigError("model.x0_halfwidth", "must be positive")
        prof = amp * np.cos(0.5 * np.pi * np.clip((a - c) / w, -1, 1)) ** 2
    elif kind == "exp":
        prof = r.num("model", "x0_amplitude", 0.05) * np.exp(-r.num("model", "x0_rate", 1.0) * a)
    elif kind == "const":
        prof = np.full(grid.n_cells, r.num("model", "x0_level", 0.0))
    elif kind == "zero":
        prof = np.zeros(grid.n_cells)
    elif kind == "table":
        prof = _table(grid, r.raw("model", "x0_table", required=True), "model.x0_table")
    else:
        raise ConfigError("model.x0", f"unknown profile {kind!r}")
    # species share the profile equally
    return np.tile((prof / n)[:, None], (1, n))


def parse_config(text: str, seed_override: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(sec, "unknown section")
        for key in cp.options(sec):
            if key not in _KNOWN[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
    for sec in _KNOWN:
        if not cp.has_section(sec):
            raise ConfigError(sec, "missing section")
    r = _Reader(cp)

    da = r.num("grid", "delta_a", required=True)
    a_max = r.num("grid", "a_max", required=True)
    p = r.num("grid", "p", 2.0)
    if not da > 0:
        raise ConfigError("grid.delta_a", "must be positive")
    if not p >= 1:
        raise ConfigError("grid.p", "must be >= 1")
    try:
        grid = AgeGrid.from_horizon(a_max, da, p)
    except (GridAlignmentError, ValueError) as exc:
        raise ConfigError("grid.a_max", str(exc)) from None

    n = r.num("model", "n", 1, cast=int)
    if n < 1:
        raise ConfigError("model.n", "must be >= 1")
    kappa = r.num("model", "kappa", required=True)
    if not kappa > 0:
        raise ConfigError("model.kappa", "must be positive")
    a_dag = _aligned(grid, r.num("model", "a_dagger", required=True), "model.a_dagger")
    bkind = r.raw("model", "beta", "const_on_support")
    if bkind == "const_on_support":
        level = r.num("model", "beta_level", required=True)
        if level < 0:
            raise ConfigError("model.beta_level", "must be >= 0")
        beta = constant_on_support(grid, level, a_dag)
    elif bkind == "table":
        beta = _table(grid, r.raw("model", "beta_table", required=True), "model.beta_table")
    else:
        raise ConfigError("model.beta", f"unknown profile {bkind!r}")
    mu_txt = r.raw("model", "mu", required=True)
    if mu_txt == "table":
        mu = _table(grid, r.raw("model", "mu_table", required=True), "model.mu_table")
    else:
        mu = r.num("model", "mu", cast=float)
    try:
        params = ModelParams(grid, kappa, beta, mu, a_dag, n)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None

    eps = r.num("scheme", "epsilon", required=True)
    tau = _aligned(grid, r.num("scheme", "tau", required=True), "scheme.tau")
    if a_max < a_dag + tau:
        raise ConfigError("grid.a_max", f"must be >= a_dagger + tau = {a_dag + tau}")
    eta_min = r.num("scheme", "eta_min")
    if eta_min is not None:
        _aligned(grid, eta_min, "scheme.eta_min")
        if eta_min < da:
            raise ConfigError("scheme.eta_min", "must be at least delta_a")
    try:
        scheme = SchemeConfig(
            epsilon=eps, tau=tau, gamma=r.num("scheme", "gamma", 0.0), rho=r.num("scheme", "rho"),
            eta_min=eta_min, max_knots=r.num("scheme", "max_knots", 100_000, cast=int),
            probes=r.num("scheme", "probes", 8, cast=int), seed=0)
    except ValueError as exc:
        raise ConfigError("scheme", str(exc)) from None

    seed = r.num("run", "seed", required=True, cast=int)
    if seed_override is not None:
        seed = int(seed_override)
    scheme = replace(scheme, seed=seed)
    levels = r.num("run", "levels", 4, cast=int)
    if levels < 2:
        raise ConfigError("run.levels", "must be >= 2")
    ceps = r.num("run", "convergence_epsilon", eps)
    if not 0 < ceps < 1:
        raise ConfigError("run.convergence_epsilon", "must lie in (0, 1)")
    ctau = _aligned(grid, r.num("run", "compare_tau", min(1.0, tau)), "run.compare_tau")
    if not ctau > 0:
        raise ConfigError("run.compare_tau", "must be positive")
    hs_txt = r.raw("run", "subtangency_h", "0.08, 0.04, 0.02, 0.01")
    try:
        hs = tuple(float(s) for s in hs_txt.split(","))
    except ValueError:
        raise ConfigError("run.subtangency_h", "must be a comma-separated list") from None
    for h in hs:
        if not h > 0:
            raise ConfigError("run.subtangency_h", "steps must be positive")
        _aligned(grid, h, "run.subtangency_h")

    x0 = GridFunction(grid, _x0(r, grid, n, kappa))
    echo = {sec: dict(cp.items(sec)) for sec in sorted(_KNOWN)}
    echo["run"]["seed"] = str(seed)
    return RunConfig(grid, params, x0, scheme, seed, levels, ceps, ctau,
                     r.num("run", "picard_iters", 200, cast=int),
                     r.num("run", "delta_trials", 32, cast=int), hs,
                     r.num("run", "subtangency_states", 10, cast=int), echo)


def load_config(path: str | None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return parse_config(DEFAULT_INI, seed_override)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, seed_override)
