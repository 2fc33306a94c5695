"""Convolution calculus ``(S diamond f)`` for step and regulated forcings.

A forcing is a step function of time with values in ``R^n x L^p``.  For a
step forcing the derivative of ``S * f`` is a finite telescoping sum of
integrated-semigroup evaluations, which is what every routine here
evaluates.  Times are absolute; a forcing that starts at ``t0`` is
convolved from ``t0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lp_grid import AgeGrid, GridFunction, StatePair, lp_norm
from .semigroup import DeltaTable, estimate_delta, integrated_values, transport_values

__all__ = [
    "StepForcing",
    "sample_regulated",
    "s_diamond_indicator",
    "s_diamond_step",
    "s_diamond_path",
    "s_diamond_bound_check",
    "cocycle_check",
    "random_step_forcing",
]


@dataclass(frozen=True, eq=False)
class StepForcing:
    """Piecewise-constant forcing ``f(s) = pieces[i]`` on ``[t_i, t_{i+1})``.

    The last piece also gives the value at the final breakpoint.
    """

    breakpoints: tuple
    pieces: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        pcs = tuple(self.pieces)
        if len(bp) < 2:
            raise ValueError("a step forcing needs at least two breakpoints")
        if len(pcs) != len(bp) - 1:
            raise ValueError("need exactly one piece per interval")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        grid = pcs[0].grid
        if any(pc.grid != grid for pc in pcs):
            raise ValueError("pieces live on different grids")
        cells = tuple(grid.steps(b) for b in bp)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", pcs)
        object.__setattr__(self, "_cells", cells)

    @property
    def grid(self) -> AgeGrid:
        return self.pieces[0].grid

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    @property
    def end(self) -> float:
        return self.breakpoints[-1]

    def piece_index(self, t: float) -> int:
        """Index ``i`` with ``t in [t_i, t_{i+1})``; the last piece at ``t_m``."""
        m = self.grid.steps(t)
        c = self._cells
        if m < c[0] or m > c[-1]:
            raise ValueError(f"t={t} outside [{self.start}, {self.end}]")
        return min(int(np.searchsorted(c, m, side="right")) - 1, len(self.pieces) - 1)

    def __call__(self, t: float) -> StatePair:
        return self.pieces[self.piece_index(t)]

    def sup_norm(self, t: float | None = None) -> float:
        """``sup ||f(s)||`` over ``[t0, t]`` (whole support by default)."""
        last = len(self.pieces) - 1 if t is None else self.piece_index(t)
        return max(pc.norm() for pc in self.pieces[:last + 1])

    def shifted(self, t: float) -> "StepForcing":
        """Restriction to ``[t, t_m]``, i.e. the forcing ``f(t + .)`` started at ``t``."""
        i = self.piece_index(t)
        if self.grid.steps(t) == self._cells[-1]:
            raise ValueError("cannot restrict to a single point")
        bp = (t,) + self.breakpoints[i + 1:]
        return StepForcing(bp, self.pieces[i:])

    def scaled_sum(self, alpha: float, other: "StepForcing", beta: float) -> "StepForcing":
        """``alpha*self + beta*other`` on the common refinement."""
        if (self.start, self.end) != (other.start, other.end):
            raise ValueError("forcings have different supports")
        bp = sorted(set(self.breakpoints) | set(other.breakpoints))
        pcs = [self(b) * alpha + other(b) * beta for b in bp[:-1]]
        return StepForcing(tuple(bp), tuple(pcs))


def sample_regulated(func: Callable[[float], StatePair], t0: float, t1: float,
                     grid: AgeGrid, step: float | None = None) -> StepForcing:
    """Step approximation of a regulated forcing on the grid-aligned lattice.

    Each interval ``[s_i, s_i + step)`` receives the value ``func(s_i)``.
    """
    step = grid.cell_width if step is None else step
    k = grid.steps(step)
    m0, m1 = grid.steps(t0), grid.steps(t1)
    if m1 <= m0 or k < 1:
        raise ValueError("need t1 > t0 and a positive step")
    cells = list(range(m0, m1, k)) + [m1]
    bp = tuple(grid.time(c) for c in cells)
    return StepForcing(bp, tuple(func(b) for b in bp[:-1]))


def _S(v: StatePair, m: int, gamma: float) -> np.ndarray:
    return integrated_values(v.boundary, v.density.values, m, v.grid, gamma)


def s_diamond_indicator(x: StatePair, a: float, b: float, t: float,
                        gamma: float = 0.0) -> GridFunction:
    """``(S diamond 1_[a,b) x)(t) = S((t-a)^+) x - S((t-b)^+) x``."""
    if not a < b:
        raise ValueError("need a < b")
    g = x.grid
    ma, mb, mt = g.steps(a), g.steps(b), g.steps(t)
    vals = _S(x, max(mt - ma, 0), gamma) - _S(x, max(mt - mb, 0), gamma)
    return GridFunction(g, vals)


def s_diamond_step(f: StepForcing, t: float, gamma: float = 0.0) -> GridFunction:
    """Telescoping evaluation of ``(S diamond f(t0 + .))(t - t0)``.

    ``sum_{i<k} [S(t - t_i) - S(t - t_{i+1})] x_i + S(t - t_k) x_k`` with
    ``t_k <= t``.
    """
    g = f.grid
    mt = g.steps(t)
    c = f._cells
    if mt < c[0] or mt > c[-1]:
        raise ValueError(f"t={t} outside [{f.start}, {f.end}]")
    out = np.zeros((g.n_cells, f.pieces[0].density.n))
    for i, pc in enumerate(f.pieces):
        if c[i] >= mt:
            break
        out += _S(pc, mt - c[i], gamma)
        if c[i + 1] < mt:
            out -= _S(pc, mt - c[i + 1], gamma)
    return GridFunction(g, out)


def s_diamond_path(f: StepForcing, gamma: float = 0.0) -> list:
    """``(S diamond f)`` at every lattice time of ``[t0, t_m]``.

    Uses the cocycle recursion ``v(s + da) = T(da) v(s) + S(da) f(s)``,
    which is algebraically the telescoping sum advanced one cell at a time.
    Returns a list of value arrays, entry ``j`` at time ``t0 + j*da``.
    """
    g = f.grid
    c = f._cells
    v = np.zeros((g.n_cells, f.pieces[0].density.n))
    out = [v]
    for i, pc in enumerate(f.pieces):
        unit = _S(pc, 1, gamma)
        for _ in range(c[i], c[i + 1]):
            v = transport_values(v, 1, g, gamma) + unit
            out.append(v)
    return out


def s_diamond_bound_check(f: StepForcing, t: float, delta: DeltaTable | None = None,
                          gamma: float = 0.0, trials: int = 32, seed: int = 0):
    """Compare ``||(S diamond f)(t)||`` with ``delta(t - t0) * sup ||f||``.

    Returns ``(lhs, rhs, holds)`` where ``holds`` is ``lhs <= rhs*(1 + 1e-9)``.
    """
    lhs = lp_norm(s_diamond_step(f, t, gamma))
    span = t - f.start
    if span <= 0:
        return lhs, 0.0, lhs <= 0.0
    if delta is None:
        d = estimate_delta(f.grid, span, trials=trials, seed=seed, gamma=gamma)
    else:
        d = delta(span)
    rhs = d * f.sup_norm(t)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-9))


def cocycle_check(f: StepForcing, t: float, s: float, gamma: float = 0.0) -> float:
    """Defect of ``D(t+s) = T(s) D(t) + (S diamond f(t + .))(s)``.

    ``t`` and ``s`` are durations measured from the start of ``f``.
    """
    g = f.grid
    t0 = f.start
    lhs = s_diamond_step(f, t0 + t + s, gamma).values
    first = transport_values(s_diamond_step(f, t0 + t, gamma).values, g.steps(s), g, gamma)
    if g.steps(s) == 0:
        second = np.zeros_like(lhs)
    else:
        second = s_diamond_step(f.shifted(t0 + t), t0 + t + s, gamma).values
    return lp_norm(GridFunction(g, lhs - first - second))


def random_step_forcing(grid: AgeGrid, t0: float, t1: float, n_pieces: int,
                        rng: np.random.Generator, n: int = 1, scale: float = 1.0) -> StepForcing:
    """Random step forcing with ``sup ||f|| <= scale`` and grid-aligned breakpoints."""
    m0, m1 = grid.steps(t0), grid.steps(t1)
    n_pieces = max(1, min(n_pieces, m1 - m0))
    inner = np.sort(rng.choice(np.arange(m0 + 1, m1), size=n_pieces - 1, replace=False)) \
        if n_pieces > 1 else np.array([], dtype=int)
    cells = [m0, *inner.tolist(), m1]
    pcs = []
    for _ in range(n_pieces):
        x = rng.normal(size=n)
        phi = rng.normal(size=(grid.n_cells, n)) * np.exp(-grid.midpoints / 2)[:, None]
        pair = StatePair(x, GridFunction(grid, phi))
        pcs.append(pair * (scale * rng.uniform(0.2, 1.0) / pair.norm()))
    return StepForcing(tuple(grid.time(c) for c in cells), tuple(pcs))
