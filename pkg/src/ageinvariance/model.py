"""Truncated age-structured model with a crowding cap.

For ``phi`` with values in R^n the nonlinearity is

    F0(phi)_i    = int beta(a) chi(phi_i(a)) chi(kappa - Theta(phi(a))) da
    F1(phi)_i(a) = -mu(a) chi(phi_i(a)) chi(kappa - Theta(phi(a)))

where ``Theta`` is the component sum and ``chi(s) = min(kappa, s^+)``.  F0
feeds the boundary (newborns), F1 acts on the density.  The constraint set
``C = {phi >= 0, Theta(phi) <= kappa}`` is invariant when
``int beta <= 4/kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lp_grid import (AgeGrid, GridFunction, StatePair, chi, dist_to_C, lp_norm,
                      project_to_C, theta)
from .semigroup import integrated_values, transport_values

__all__ = [
    "ModelParams",
    "BetaCondition",
    "F0",
    "F1",
    "F",
    "F0_untruncated",
    "F1_untruncated",
    "predictor",
    "vhat",
    "vhat1",
    "vhat2",
    "check_beta_condition",
    "h0_bound",
    "subtangency_defect",
    "sample_state_in_C",
    "lipschitz_quotient",
    "constant_on_support",
]


def _profile(grid: AgeGrid, prof, name: str) -> np.ndarray:
    if isinstance(prof, GridFunction):
        if prof.grid != grid or prof.n != 1:
            raise ValueError(f"{name} must be a scalar grid function on the model grid")
        return prof.values[:, 0].copy()
    arr = np.asarray(prof, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.n_cells, float(arr))
    if arr.shape != (grid.n_cells,):
        raise ValueError(f"{name} must have one value per cell")
    return arr.copy()


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of the model.

    Parameters
    ----------
    grid : AgeGrid
    kappa : float
        Crowding cap, ``kappa > 0``.
    beta : GridFunction, array_like or float
        Birth rate per cell, non-negative and zero past ``a_dagger``.
    mu : GridFunction, array_like or float
        Mortality per cell with positive essential infimum.
    a_dagger : float
        Right end of the support of ``beta``.
    n : int
        Number of species.
    """

    grid: AgeGrid
    kappa: float
    beta: np.ndarray
    mu: np.ndarray
    a_dagger: float
    n: int = 1

    def __post_init__(self):
        g = self.grid
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        beta = _profile(g, self.beta, "beta")
        mu = _profile(g, self.mu, "mu")
        if np.any(beta < 0):
            raise ValueError("beta must be non-negative")
        if np.any(beta[g.nodes >= self.a_dagger - 1e-12 * g.cell_width] != 0):
            raise ValueError("beta must vanish for a >= a_dagger")
        if not np.min(mu) > 0:
            raise ValueError("mu must be bounded below by a positive constant")
        beta.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "n", int(self.n))

    @property
    def p(self) -> float:
        return self.grid.p

    @property
    def mu_minus(self) -> float:
        return float(np.min(self.mu))

    @property
    def mu_sup(self) -> float:
        return float(np.max(self.mu))

    @property
    def beta_integral(self) -> float:
        return float(np.sum(self.beta) * self.grid.cell_width)

    def with_beta(self, beta) -> "ModelParams":
        return ModelParams(self.grid, self.kappa, beta, self.mu, self.a_dagger, self.n)


class BetaCondition(NamedTuple):
    value: bool
    integral: float
    bound: float
    margin: float


# -- nonlinearity ------------------------------------------------------------

def _vals(phi, params: ModelParams) -> np.ndarray:
    v = phi.values if isinstance(phi, GridFunction) else np.asarray(phi, dtype=float)
    if v.shape != (params.grid.n_cells, params.n):
        raise ValueError(f"state must have shape ({params.grid.n_cells}, {params.n})")
    return v


def _rate(v: np.ndarray, kappa: float) -> np.ndarray:
    """Cell-wise ``chi(phi_i) * chi(kappa - Theta(phi))``."""
    return chi(v, kappa) * chi(kappa - theta(v), kappa)[:, None]


def _F0(v, params) -> np.ndarray:
    return params.beta @ _rate(v, params.kappa) * params.grid.cell_width


def _F1(v, params) -> np.ndarray:
    return -params.mu[:, None] * _rate(v, params.kappa)


def F0(phi: GridFunction, params: ModelParams) -> np.ndarray:
    """Birth vector (cell-rule quadrature, exact for step data)."""
    return _F0(_vals(phi, params), params)


def F1(phi: GridFunction, params: ModelParams) -> GridFunction:
    """Density component of the nonlinearity."""
    return GridFunction(params.grid, _F1(_vals(phi, params), params))


def F(phi: GridFunction, params: ModelParams) -> StatePair:
    v = _vals(phi, params)
    return StatePair(_F0(v, params), GridFunction(params.grid, _F1(v, params)))


def F0_untruncated(phi: GridFunction, params: ModelParams) -> np.ndarray:
    """Birth vector without truncation; agrees with :func:`F0` on C."""
    v = _vals(phi, params)
    return params.beta @ (v * (params.kappa - theta(v))[:, None]) * params.grid.cell_width


def F1_untruncated(phi: GridFunction, params: ModelParams) -> GridFunction:
    v = _vals(phi, params)
    return GridFunction(params.grid,
                        -params.mu[:, None] * (v * (params.kappa - theta(v))[:, None]))


def predictor_values(v: np.ndarray, m: int, params: ModelParams, gamma: float = 0.0) -> np.ndarray:
    """Array form of :func:`predictor` with the step given in cells."""
    g = params.grid
    f1 = _F1(v, params)
    if gamma:
        f1 = f1 + gamma * v
    return transport_values(v, m, g, gamma) + integrated_values(_F0(v, params), f1, m, g, gamma)


def predictor(phi: GridFunction, h: float, params: ModelParams, gamma: float = 0.0) -> GridFunction:
    """Euler predictor ``T_gamma(h) phi + S_gamma(h) F_gamma(phi)``.

    With a scalar shift the semigroup is that of ``A - gamma I`` and the
    nonlinearity is compensated, ``F_gamma(phi) = F(phi) + gamma*(0, phi)``,
    so every ``gamma`` targets the same solution.
    """
    m = params.grid.steps(h)
    return GridFunction(params.grid, predictor_values(_vals(phi, params), m, params, gamma))


def vhat(phi: GridFunction, h: float, params: ModelParams) -> GridFunction:
    """One-step map ``T(h) phi + S(h) F(phi)``."""
    return predictor(phi, h, params, 0.0)


def vhat1(phi: GridFunction, h: float, params: ModelParams) -> GridFunction:
    """Principal part: ``F0(phi)`` on ``a < h``, ``phi(a-h) + h F1(phi)(a-h)`` beyond."""
    g = params.grid
    m = g.steps(h)
    v = _vals(phi, params)
    out = transport_values(v + m * g.cell_width * _F1(v, params), m, g)
    out[:min(m, g.n_cells)] = _F0(v, params)
    return GridFunction(g, out)


def vhat2(phi: GridFunction, h: float, params: ModelParams) -> GridFunction:
    """Remainder ``vhat - vhat1``."""
    return vhat(phi, h, params) - vhat1(phi, h, params)


# -- certificates ------------------------------------------------------------

def check_beta_condition(params: ModelParams) -> BetaCondition:
    """Test ``int_0^{a_dagger} beta <= 4/kappa``."""
    integral = params.beta_integral
    bound = 4.0 / params.kappa
    return BetaCondition(bool(integral <= bound), integral, bound, bound - integral)


def h0_bound(params: ModelParams) -> float:
    """Step size ``1/(||mu||_inf kappa)`` below which ``s -> (1 - h mu (kappa - s)) s``
    is non-decreasing on ``[0, kappa]`` for every mortality value."""
    m = params.mu_sup
    if not m > 0:
        raise ValueError("||mu||_inf must be positive")
    return 1.0 / (m * params.kappa)


def subtangency_defect(phi: GridFunction, h: float, params: ModelParams,
                       tol: float = 1e-12) -> float:
    """``dist(T(h) phi + S(h) F(phi), C) / h`` for ``phi`` in C."""
    if not h > 0:
        raise ValueError("h must be positive")
    if dist_to_C(phi, params.kappa) > tol:
        raise ValueError("phi is not in C")
    return dist_to_C(vhat(phi, h, params), params.kappa) / h


# -- sampling ----------------------------------------------------------------

def sample_state_in_C(params: ModelParams, rng: np.random.Generator,
                      support: float | None = None, saturate: bool = True) -> GridFunction:
    """Random smooth state in C.

    A sum of 1 to 3 compactly supported cosine bumps inside
    ``(0, support)``, overshooting ``kappa`` with probability one half (when
    ``saturate``) so that some draws touch the cap on a band, is clipped into
    ``[0, kappa]`` and split between species with random weights.  Every draw
    has a zero-to-positive transition in age, where the sub-tangency defect
    is non-trivial.
    """
    g, kappa = params.grid, params.kappa
    support = min(g.a_max, 2 * params.a_dagger if support is None else support)
    a = g.midpoints
    total = np.zeros(g.n_cells)
    for _ in range(int(rng.integers(1, 4))):
        w = rng.uniform(0.1, 0.4) * support
        c = rng.uniform(w + 2 * g.cell_width, support - w)
        amp = rng.uniform(0.1, 1.0) * kappa
        z = (a - c) / w
        total += np.where(np.abs(z) < 1, amp * np.cos(0.5 * np.pi * z) ** 2, 0.0)
    if saturate and rng.uniform() < 0.5:
        total *= rng.uniform(1.0, 1.6)
    total = np.clip(total, 0.0, kappa)
    if params.n == 1:
        return GridFunction(g, total)
    w = rng.dirichlet(np.ones(params.n))
    # the split can overshoot the cap by rounding
    return project_to_C(GridFunction(g, total[:, None] * w[None, :]), kappa)


def lipschitz_quotient(params: ModelParams, rng: np.random.Generator, pairs: int = 1000,
                       radius: float = 1.0) -> float:
    """Largest ``||F(phi) - F(psi)|| / ||phi - psi||`` over random pairs in a ball."""
    g = params.grid
    best = 0.0
    for _ in range(pairs):
        u = rng.normal(size=(g.n_cells, params.n)) * rng.uniform(0.1, 2) * params.kappa
        phi = GridFunction(g, u)
        phi = phi * (radius * rng.uniform() / max(lp_norm(phi), 1e-300))
        d = GridFunction(g, rng.normal(size=u.shape))
        psi = phi + d * (rng.uniform(1e-3, 1) * radius / lp_norm(d))
        num = (F(phi, params) - F(psi, params)).norm()
        den = lp_norm(phi - psi)
        best = max(best, num / den)
    return best


def constant_on_support(grid: AgeGrid, level: float, a_dagger: float) -> np.ndarray:
    """Cell profile ``level * 1_[0, a_dagger)``."""
    return np.where(grid.nodes < a_dagger - 1e-12 * grid.cell_width, float(level), 0.0)
