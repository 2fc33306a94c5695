"""Invariance-preserving Euler scheme built from adaptive knots.

Starting at ``y_0 = x0`` the scheme picks a step from a halving search,
predicts with the semigroup Euler step
``z = T_gamma(h) y_k + S_gamma(h) F_gamma(y_k)``, projects back onto C and
stores the correction ``H = (y_{k+1} - z)/h``.  Between knots the
approximate solution is

    u_eps(t) = T_gamma(t - l_k) y_k + S_gamma(t - l_k) F_gamma(y_k) + (t - l_k) H_{k+1},

which is continuous and equals ``y_k`` at every knot.  All step sizes are
multiples of the cell width, so transport is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .convolution import StepForcing, s_diamond_path
from .lp_grid import GridFunction, StatePair, _cell_norms, _lp_from_cells, cell_distance_to_K, project_to_C
from .model import ModelParams, _F0, _F1, check_beta_condition, predictor_values
from .semigroup import DeltaTable, transport_values

__all__ = [
    "SchemeConfig",
    "Knot",
    "Trajectory",
    "SchemeError",
    "StepSizeCollapse",
    "KnotCapExceeded",
    "DivergenceDetected",
    "trial_step",
    "advance_knot",
    "build_knots",
    "run_scheme",
    "assemble_u_eps",
    "global_form",
    "converge_run",
    "ConvergenceResult",
    "run_certificates",
    "mild_residual",
    "sample_trajectory",
]


class SchemeError(RuntimeError):
    """Base class of scheme failures; ``knots`` holds the partial run."""

    def __init__(self, msg, knots=None):
        super().__init__(msg)
        self.knots = list(knots or [])


class StepSizeCollapse(SchemeError):
    pass


class KnotCapExceeded(SchemeError):
    pass


class DivergenceDetected(SchemeError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    """Run parameters.

    Parameters
    ----------
    epsilon : float
        Accuracy parameter in ``(0, 1)``.
    tau : float
        Horizon, grid-aligned.
    gamma : float
        Scalar shift ``gamma >= 0`` of the generator.
    rho : float, optional
        Working radius; ``2(||x0|| + 1)`` when omitted.
    eta_min : float, optional
        Smallest trial step; defaults to one cell.
    max_knots : int
    probes : int
        Random perturbations used to probe continuity of ``F_gamma``.
    seed : int
    """

    epsilon: float
    tau: float
    gamma: float = 0.0
    rho: float | None = None
    eta_min: float | None = None
    max_knots: int = 100_000
    probes: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.max_knots < 1:
            raise ValueError("max_knots must be >= 1")

    def radius(self, x0: GridFunction) -> float:
        return self.rho if self.rho is not None else 2.0 * (_norm(x0.values, x0.grid) + 1.0)

    def min_cells(self, grid) -> int:
        if self.eta_min is None:
            return 1
        m = grid.steps(self.eta_min)
        if m < 1:
            raise ValueError("eta_min must be at least one cell")
        return m


@dataclass(frozen=True, eq=False)
class Knot:
    """Knot ``(l_k, y_k)``; ``H`` is the correction of the step ending here
    (zero at the initial knot) and ``eta`` the step accepted by the search
    that produced it."""

    l: float
    y: GridFunction
    H: GridFunction
    eta: float


@dataclass(eq=False)
class Trajectory:
    knots: list
    samples: list
    defects: list
    terminated_by: str
    epsilon: float
    gamma: float = 0.0
    lambda_hat: float = 0.0
    gamma_hat: float = 0.0
    rho: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def defect_sup(self) -> float:
        return max(self.defects) if self.defects else 0.0


def _norm(v: np.ndarray, grid) -> float:
    return _lp_from_cells(_cell_norms(v, grid.p), grid)


def _dist(v: np.ndarray, params: ModelParams) -> float:
    return _lp_from_cells(cell_distance_to_K(v, params.kappa, params.p), params.grid)


def _F_gamma(v: np.ndarray, params: ModelParams, gamma: float):
    f1 = _F1(v, params)
    if gamma:
        f1 = f1 + gamma * v
    return _F0(v, params), f1


def _pair_norm(x, f1, grid) -> float:
    return float(np.sum(np.abs(x) ** grid.p) ** (1 / grid.p)) + _norm(f1, grid)


class _Probe:
    """Continuity probe for ``F_gamma`` on ``B(y, eta) \\cap C``."""

    def __init__(self, params, gamma, count, rng):
        self.params, self.gamma, self.count, self.rng = params, gamma, count, rng
        self.lipschitz = 0.0

    def __call__(self, y: np.ndarray, eta: float, eps: float) -> bool:
        g, P = self.params.grid, self.params
        x0, f0 = _F_gamma(y, P, self.gamma)
        for _ in range(self.count):
            r = self.rng.normal(size=y.shape)
            r *= eta / _norm(r, g)
            w = project_to_C(GridFunction(g, y + r), P.kappa).values - y
            nw = _norm(w, g)
            if nw == 0:
                continue
            yp = y + w * min(1.0, eta / nw)
            x1, f1 = _F_gamma(yp, P, self.gamma)
            d = _pair_norm(x1 - x0, f1 - f0, g)
            self.lipschitz = max(self.lipschitz, d / _norm(yp - y, g))
            if d > eps:
                return False
        return True


def _conditions(y: np.ndarray, m: int, eps: float, gamma: float, params: ModelParams,
                probe: _Probe) -> bool:
    g = params.grid
    h = g.time(m)
    if _norm(transport_values(y, m, g, gamma) - y, g) > eps:
        return False
    if _dist(predictor_values(y, m, params, gamma), params) / h >= eps / 2:
        return False
    return probe(y, h, eps)


def trial_step(l: float, y: GridFunction, eps: float, cfg: SchemeConfig,
               params: ModelParams, rho: float | None = None, probe: _Probe | None = None) -> float:
    """Largest step of the halving search satisfying the three admissibility tests.

    Candidates are ``m0, m0//2, ...`` cells with ``m0 = floor(min(eps, rho)/da)``.
    A candidate ``eta`` is accepted when

    (a) ``||F_gamma(y') - F_gamma(y)|| <= eps`` for the probe states
        ``y' in B(y, eta) \\cap C`` (the system is autonomous, so the time
        offset plays no role);
    (b) ``dist(T_gamma(eta) y + S_gamma(eta) F_gamma(y), C) / eta < eps/2``;
    (c) ``||T_gamma(eta) y - y|| <= eps``.

    Raises
    ------
    StepSizeCollapse
        If no candidate of at least ``eta_min`` passes.
    """
    g = params.grid
    rho = cfg.radius(y) if rho is None else rho
    if probe is None:
        probe = _Probe(params, cfg.gamma, cfg.probes, np.random.default_rng(cfg.seed))
    m = g.floor_steps(min(eps, rho))
    floor = cfg.min_cells(g)
    v = y.values
    while m >= floor:
        if _conditions(v, m, eps, cfg.gamma, params, probe):
            return g.time(m)
        m //= 2
    raise StepSizeCollapse(
        f"no admissible step >= {g.time(floor)} at l={l} (eps={eps})")


def advance_knot(k: Knot, eta: float, eps: float, cfg: SchemeConfig, params: ModelParams,
                 t_end: float | None = None) -> Knot:
    """Advance by ``h = eta/2`` (one cell at the grid floor), capped at ``t_end``.

    The predictor is projected onto C and ``H = (y_next - z)/h``.  The step
    is halved while ``||H|| > eps/2``.
    """
    g = params.grid
    m = max(1, g.steps(eta) // 2)
    if t_end is not None:
        m = min(m, g.steps(t_end) - g.steps(k.l))
        if m < 1:
            raise ValueError("knot already at the end time")
    y = k.y.values
    while m >= 1:
        h = g.time(m)
        z = predictor_values(y, m, params, cfg.gamma)
        y_next = project_to_C(GridFunction(g, z), params.kappa)
        H = (y_next.values - z) / h
        if _norm(H, g) <= eps / 2:
            return Knot(g.time(g.steps(k.l) + m), y_next, GridFunction(g, H), eta)
        m //= 2
    raise StepSizeCollapse(f"correction exceeds eps/2 at the smallest step (l={k.l})")


def build_knots(x0: GridFunction, cfg: SchemeConfig, params: ModelParams) -> list:
    """Knot sequence from ``l = 0`` to ``l = tau``.

    Raises
    ------
    StepSizeCollapse, KnotCapExceeded, DivergenceDetected
        The partial knot list is attached to the exception.
    """
    probe = _Probe(params, cfg.gamma, cfg.probes, np.random.default_rng(cfg.seed))
    return _build_knots(x0, cfg, params, probe)


def _build_knots(x0, cfg, params, probe) -> list:
    g = params.grid
    if _dist(x0.values, params) > 1e-12:
        raise ValueError("x0 is not in C")
    tau_cells = g.steps(cfg.tau)
    rho = cfg.radius(x0)
    knots = [Knot(0.0, x0, GridFunction.zeros(g, x0.n), 0.0)]
    eps = cfg.epsilon
    while g.steps(knots[-1].l) < tau_cells:
        if len(knots) > cfg.max_knots:
            raise KnotCapExceeded(f"more than {cfg.max_knots} knots", knots)
        k = knots[-1]
        try:
            eta = trial_step(k.l, k.y, eps, cfg, params, rho, probe)
            nxt = advance_knot(k, eta, eps, cfg, params, cfg.tau)
        except StepSizeCollapse as exc:
            raise StepSizeCollapse(str(exc), knots) from None
        knots.append(nxt)
        if _norm(nxt.y.values, g) > 10 * rho:
            raise DivergenceDetected(f"||y_k|| exceeded 10*rho at l={nxt.l}", knots)
    return knots


def _segment(knots: list, m: int, grid) -> int:
    cells = [grid.steps(k.l) for k in knots]
    i = int(np.searchsorted(cells, m, side="right")) - 1
    return i


def assemble_u_eps(knots: list, t: float, cfg: SchemeConfig, params: ModelParams) -> GridFunction:
    """Evaluate the piecewise formula for ``u_eps(t)``; exact at knots."""
    g = params.grid
    m = g.steps(t)
    last = g.steps(knots[-1].l)
    if m > last:
        raise ValueError(f"t={t} outside [0, {knots[-1].l}]")
    i = _segment(knots, m, g)
    k = knots[i]
    off = m - g.steps(k.l)
    if off == 0:
        return k.y
    return GridFunction(g, _segment_value(k, knots[i + 1], off, cfg.gamma, params))


def _segment_value(k: Knot, nxt: Knot, off: int, gamma: float, params: ModelParams) -> np.ndarray:
    g = params.grid
    return predictor_values(k.y.values, off, params, gamma) + g.time(off) * nxt.H.values


def global_form(knots: list, t: float, cfg: SchemeConfig, params: ModelParams) -> GridFunction:
    """Global representation of ``u_eps(t)``.

    ``T_gamma(t) x0 + (S_gamma diamond f)(t) + sum_{j<k} T_gamma(t - l_{j+1}) h_j H_{j+1}
    + (t - l_k) H_{k+1}`` with ``f = F_gamma(y_j)`` on ``[l_j, l_{j+1})``.
    """
    from .convolution import s_diamond_step
    g = params.grid
    gamma = cfg.gamma
    m = g.steps(t)
    x0 = knots[0].y.values
    out = transport_values(x0, m, g, gamma)
    if m == 0:
        return GridFunction(g, out)
    pieces = []
    for k in knots[:-1]:
        b, f1 = _F_gamma(k.y.values, params, gamma)
        pieces.append(StatePair(b, GridFunction(g, f1)))
    forcing = StepForcing(tuple(k.l for k in knots), tuple(pieces))
    out = out + s_diamond_step(forcing, t, gamma).values
    i = _segment(knots, m, g)
    for j in range(min(i, len(knots) - 1)):
        l1 = g.steps(knots[j + 1].l)
        h = g.time(l1 - g.steps(knots[j].l))
        out = out + transport_values(h * knots[j + 1].H.values, m - l1, g, gamma)
    off = m - g.steps(knots[i].l)
    if off > 0:
        out = out + g.time(off) * knots[i + 1].H.values
    return GridFunction(g, out)


def sample_trajectory(knots: list, cfg: SchemeConfig, params: ModelParams) -> list:
    """``(t, u_eps(t))`` at every lattice time covered by ``knots``."""
    g = params.grid
    out = []
    for i, k in enumerate(knots):
        out.append((k.l, k.y))
        if i + 1 < len(knots):
            span = g.steps(knots[i + 1].l) - g.steps(k.l)
            for off in range(1, span):
                v = _segment_value(k, knots[i + 1], off, cfg.gamma, params)
                out.append((g.time(g.steps(k.l) + off), GridFunction(g, v)))
    return out


def run_scheme(x0: GridFunction, cfg: SchemeConfig, params: ModelParams) -> Trajectory:
    """Build knots and sample ``u_eps`` on every lattice time.

    Knot-cap and divergence failures end the run early and are recorded in
    ``terminated_by``; a step-size collapse propagates.
    """
    rho = cfg.radius(x0)
    probe = _Probe(params, cfg.gamma, cfg.probes, np.random.default_rng(cfg.seed))
    try:
        knots = _build_knots(x0, cfg, params, probe)
        term = "horizon"
    except KnotCapExceeded as exc:
        knots, term = exc.knots, "knot_cap"
    except DivergenceDetected as exc:
        knots, term = exc.knots, "divergence"
    lam_probe = probe.lipschitz
    samples = sample_trajectory(knots, cfg, params)
    defects = [_dist(u.values, params) for _, u in samples]
    g = params.grid
    gam_hat = 0.0
    lam = lam_probe
    prev = None
    for _, u in samples:
        b, f1 = _F_gamma(u.values, params, cfg.gamma)
        gam_hat = max(gam_hat, _pair_norm(b, f1, g))
    for k in knots:
        b, f1 = _F_gamma(k.y.values, params, cfg.gamma)
        if prev is not None:
            dy = _norm(k.y.values - prev[0], g)
            if dy > 0:
                lam = max(lam, _pair_norm(b - prev[1], f1 - prev[2], g) / dy)
        prev = (k.y.values, b, f1)
    return Trajectory(knots, samples, defects, term, cfg.epsilon, cfg.gamma,
                      lambda_hat=lam, gamma_hat=gam_hat, rho=rho)


# -- convergence -------------------------------------------------------------

@dataclass(eq=False)
class ConvergenceResult:
    epsilons: list
    trajectories: list
    cauchy: list


def _sup_diff(a: Trajectory, b: Trajectory, grid) -> float:
    ua = {grid.steps(t): u.values for t, u in a.samples}
    best = 0.0
    for t, u in b.samples:
        m = grid.steps(t)
        if m in ua:
            best = max(best, _norm(ua[m] - u.values, grid))
    return best


def converge_run(x0: GridFunction, cfg: SchemeConfig, params: ModelParams,
                 levels: int = 4) -> ConvergenceResult:
    """Runs at ``eps/2^j`` for ``j < levels`` and their successive sup-differences."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    eps = [cfg.epsilon / 2 ** j for j in range(levels)]
    trajs = [run_scheme(x0, replace(cfg, epsilon=e), params) for e in eps]
    g = params.grid
    cauchy = [_sup_diff(a, b, g) for a, b in zip(trajs, trajs[1:])]
    return ConvergenceResult(eps, trajs, cauchy)


# -- a posteriori certificates ----------------------------------------------

def run_certificates(traj: Trajectory, cfg: SchemeConfig, params: ModelParams,
                     delta: DeltaTable | None = None, pairs: bool = True) -> dict:
    """Measured counterparts of the step-size and horizon constraints.

    Uses ``M = 1`` and ``omega = -gamma`` for the shifted transport
    semigroup, so ``exp(omega^+ t) = 1``.
    """
    g = params.grid
    eps = traj.epsilon
    tau = traj.knots[-1].l if traj.knots[-1].l > 0 else cfg.tau
    if delta is None:
        delta = DeltaTable(g, max(cfg.tau, eps), seed=cfg.seed, gamma=cfg.gamma)
    lam, gam = traj.lambda_hat, traj.gamma_hat
    x0 = traj.knots[0].y.values
    d_tau = delta(tau)
    growth = max(gam * delta(g.time(m)) + g.time(m) + _norm(transport_values(x0, m, g, cfg.gamma), g)
                 for m in range(g.steps(tau) + 1))
    out = {
        "lambda_hat": lam,
        "gamma_hat": gam,
        "delta_tau": d_tau,
        "delta_eps": delta(eps),
        "rho": traj.rho,
        "growth_sup": growth,
        "radius_ok": bool(growth <= traj.rho),
        "contraction": lam * d_tau,
        "contraction_ok": bool(0 < lam * d_tau < 1),
    }
    out["satisfied"] = out["radius_ok"] and out["contraction_ok"]
    out["beta_condition"] = check_beta_condition(params).value
    # sup distance from the knot on each segment
    seg_bound = eps + gam * delta(eps) + eps ** 2 / 2
    seg_sup = 0.0
    knots = traj.knots
    for t, u in traj.samples:
        i = _segment(knots, g.steps(t), g)
        seg_sup = max(seg_sup, _norm(u.values - knots[min(i, len(knots) - 1)].y.values, g))
    out["segment_sup"] = seg_sup
    out["segment_bound"] = seg_bound
    out["norm_sup"] = max(_norm(u.values, g) for _, u in traj.samples)
    out["defect_bound"] = eps + gam * delta(eps)
    if pairs:
        worst = -math.inf
        for k in range(1, len(knots)):
            for m in range(k):
                span = knots[k].l - knots[m].l
                lhs = _norm(knots[k].y.values - transport_values(
                    knots[m].y.values, g.steps(span), g, cfg.gamma), g)
                rhs = gam * delta(span) + eps / 2 * span
                worst = max(worst, lhs - rhs)
        out["knot_drift_slack"] = -worst if worst > -math.inf else 0.0
    return out


def mild_residual(traj: Trajectory, cfg: SchemeConfig, params: ModelParams,
                  delta: DeltaTable | None = None) -> tuple:
    """``sup_t ||u(t) - T(t) x0 - (S diamond F(u))(t)||`` and its ratio to ``eps + delta(eps)``.

    ``F(u)`` is sampled on the cell lattice (unshifted generator).
    """
    g = params.grid
    samples = traj.samples
    pieces = []
    for _, u in samples[:-1]:
        b, f1 = _F_gamma(u.values, params, 0.0)
        pieces.append(StatePair(b, GridFunction(g, f1)))
    forcing = StepForcing(tuple(t for t, _ in samples), tuple(pieces))
    path = s_diamond_path(forcing)
    x0 = samples[0][1].values
    res = 0.0
    for j, (t, u) in enumerate(samples):
        r = u.values - transport_values(x0, j, g) - path[j]
        res = max(res, _norm(r, g))
    if delta is None:
        delta = DeltaTable(g, max(cfg.tau, traj.epsilon), seed=cfg.seed)
    return res, res / (traj.epsilon + delta(traj.epsilon))
