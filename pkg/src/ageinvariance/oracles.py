"""Reference solvers for the truncated model.

``picard_solve`` iterates the variation-of-constants formula on the cell
lattice.  ``characteristics_solve`` integrates the model along the lines
``a - t = const`` with unit CFL and does not use the semigroup or
convolution code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import StepForcing, s_diamond_path
from .lp_grid import GridFunction, StatePair, lp_norm
from .model import ModelParams, _F0, _F1, lipschitz_quotient
from .semigroup import DeltaTable, transport_values

__all__ = [
    "PicardResult",
    "NonContraction",
    "picard_solve",
    "characteristics_solve",
    "sup_distance",
    "naive_integrated",
    "riemann_diamond",
]


class NonContraction(RuntimeError):
    """Successive Picard differences stopped shrinking."""


@dataclass(eq=False)
class PicardResult:
    samples: list
    diffs: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    lambda_hat: float = 0.0

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _lp(v, grid) -> float:
    return lp_norm(GridFunction(grid, v))


def _window_cells(lam: float, delta: DeltaTable, total: int, grid) -> int:
    """Largest window ``w <= total`` cells with ``lam * delta(w) < 1``."""
    if lam <= 0:
        return total
    w = total
    while w > 1 and lam * delta(grid.time(w)) >= 1:
        w = max(1, w // 2)
    return w


def picard_solve(x0: GridFunction, tau: float, iters: int, params: ModelParams,
                 forcing: Callable | None = None, tol: float = 1e-10,
                 lam: float | None = None, delta: DeltaTable | None = None,
                 seed: int = 0) -> PicardResult:
    """Fixed point of ``u(t) = T(t) x0 + (S diamond F(u))(t)`` on the cell lattice.

    ``F(u)`` is held constant on each cell interval ``[t_j, t_j + da)``.  The
    horizon is split into windows on which the measured contraction factor
    ``lam * delta(window)`` is below one; each window restarts from the
    previous window's final state.

    Parameters
    ----------
    forcing : callable, optional
        Replacement nonlinearity ``values -> (boundary, density_values)``.
    lam : float, optional
        Lipschitz constant of ``F``; estimated by random probing if omitted.

    Raises
    ------
    NonContraction
        If the difference ratio is ``>= 1`` on three consecutive iterations.
    """
    g = params.grid
    total = g.steps(tau)
    if forcing is None:
        def forcing(v):
            return _F0(v, params), _F1(v, params)
        if lam is None:
            lam = lipschitz_quotient(params, np.random.default_rng(seed), pairs=200)
    lam = 0.0 if lam is None else lam
    if delta is None:
        delta = DeltaTable(g, max(tau, g.cell_width), seed=seed)
    w = _window_cells(lam, delta, total, g)
    res = PicardResult(samples=[(0.0, x0)], lambda_hat=lam)
    start, y0 = 0, x0.values
    while start < total:
        width = min(w, total - start)
        res.windows.append((g.time(start), g.time(start + width)))
        free = [transport_values(y0, j, g) for j in range(width + 1)]
        u = [y0] * (width + 1)
        prev_diff, bad = None, 0
        for it in range(iters):
            pieces = []
            for j in range(width):
                b, f1 = forcing(u[j])
                pieces.append(StatePair(b, GridFunction(g, f1)))
            bp = tuple(g.time(start + j) for j in range(width + 1))
            path = s_diamond_path(StepForcing(bp, tuple(pieces)))
            new = [free[j] + path[j] for j in range(width + 1)]
            diff = max(_lp(a - b, g) for a, b in zip(new, u))
            u = new
            res.diffs.append(diff)
            res.iterations += 1
            if prev_diff is not None and prev_diff > 0:
                r = diff / prev_diff
                res.ratios.append(r)
                bad = bad + 1 if r >= 1 else 0
                if bad >= 3:
                    raise NonContraction(f"ratio >= 1 for 3 iterations in window {res.windows[-1]}")
            prev_diff = diff
            if diff < tol:
                break
        else:
            res.converged = False
        res.samples.extend((g.time(start + j), GridFunction(g, u[j])) for j in range(1, width + 1))
        start += width
        y0 = u[-1]
    return res


def characteristics_solve(x0: GridFunction, tau: float, params: ModelParams) -> list:
    """March along characteristics with time step equal to the cell width.

    Each step computes the renewal integral from the current state, moves
    every cell one cell to the right, advances the mortality ODE
    ``u' = -mu chi(u_i) chi(kappa - Theta(u))`` with one RK4 step using the
    mortality of the cell the characteristic leaves, and writes the
    newborns into cell 0.
    """
    g = params.grid
    da = g.cell_width
    kappa = params.kappa
    beta = np.asarray(params.beta, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    steps = int(round(tau / da))
    if abs(steps * da - tau) > 1e-9 * max(1.0, tau):
        raise ValueError("tau must be a multiple of the cell width")

    def clamp(s):
        return np.minimum(kappa, np.maximum(s, 0.0))

    def rate(u):
        return clamp(u) * clamp(kappa - u.sum(axis=1))[:, None]

    def renewal(u):
        r = rate(u)
        out = np.zeros(u.shape[1])
        for c in range(u.shape[0]):     # fixed summation order
            if beta[c] != 0.0:
                out += beta[c] * r[c] * da
        return out

    m_src = np.concatenate([[mu[0]], mu[:-1]])[:, None]

    def rhs(u):
        return -m_src * rate(u)

    u = x0.values.copy()
    out = [(0.0, GridFunction(g, u))]
    for k in range(1, steps + 1):
        b = renewal(u)
        s = np.zeros_like(u)
        s[1:] = u[:-1]
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * da * k1)
        k3 = rhs(s + 0.5 * da * k2)
        k4 = rhs(s + da * k3)
        s = s + da / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s[0] = b
        u = s
        out.append((k * da, GridFunction(g, u)))
    return out


def sup_distance(a, b) -> float:
    """``sup_t ||a(t) - b(t)||`` over the common sample times of two sample lists."""
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0.0
    grid = a[0][1].grid
    ia = {int(round(t / grid.cell_width)): u for t, u in a}
    best = 0.0
    for t, u in b:
        key = int(round(t / grid.cell_width))
        if key in ia:
            best = max(best, lp_norm(ia[key] - u))
    return best


# -- brute-force convolution reference ---------------------------------------

def naive_integrated(x, values: np.ndarray, m: int, grid, sub: int = 4) -> np.ndarray:
    """Integrated semigroup at the cell nodes by direct quadrature in ``l``.

    ``x [a_c < t] + int_0^t phi(a_c - l) dl`` with ``sub`` midpoints per cell;
    the midpoints never hit a cell edge, so the rule is exact for step
    ``phi``.
    """
    da = grid.cell_width
    N = values.shape[0]
    nodes = np.arange(N) * da
    out = np.zeros_like(values, dtype=float)
    out[nodes < m * da - 0.5 * da] += np.asarray(x, dtype=float)
    for j in range(m):
        for q in range(sub):
            l = (j + (q + 0.5) / sub) * da
            a = nodes - l
            ok = a >= 0
            idx = np.floor(a[ok] / da + 1e-9).astype(int)
            out[ok] += values[idx] * (da / sub)
    return out


def riemann_diamond(forcing: StepForcing, t: float) -> GridFunction:
    """``d/dt (S * f)(t)`` as a backward difference of a Riemann sum.

    ``R(M) = da * sum_{j<M} S((M - j) da) f(t0 + j da)`` is the Riemann sum
    of ``(S * f)(t0 + M da)`` on the cell lattice; ``(R(M) - R(M-1))/da``
    is returned.
    """
    g = forcing.grid
    da = g.cell_width
    M = g.steps(t) - g.steps(forcing.start)
    if M < 1:
        return GridFunction.zeros(g, forcing.pieces[0].density.n)
    fs = [forcing(forcing.start + j * da) for j in range(M)]

    def R(K):
        acc = np.zeros_like(fs[0].density.values)
        for j in range(K):
            acc += naive_integrated(fs[j].boundary, fs[j].density.values, K - j, g)
        return acc * da

    return GridFunction(g, (R(M) - R(M - 1)) / da)
