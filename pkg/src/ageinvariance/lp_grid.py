"""Piecewise-constant age densities on a uniform grid.

A :class:`GridFunction` stores one vector in R^n per age cell.  Cell ``c``
covers ``[c*da, (c+1)*da)`` and the stored value is the value of the step
function on that cell.  Norms are the exact L^p norms of the step function,
with the l^p norm used inside each cell so that the constraint set

    C = {phi : phi(a) >= 0 componentwise, sum_i phi_i(a) <= kappa}

factors through cell-wise distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "AgeGrid",
    "GridAlignmentError",
    "GridFunction",
    "StatePair",
    "lp_norm",
    "vector_norm",
    "theta",
    "chi",
    "shift_right",
    "cell_distance_to_K",
    "dist_to_C",
    "project_to_C",
    "in_C",
]

# relative slack used when deciding whether a time sits on the lattice
_ALIGN_RTOL = 1e-9


class GridAlignmentError(ValueError):
    """A time or step is not an integer multiple of the cell width."""


@dataclass(frozen=True)
class AgeGrid:
    """Uniform truncation of the age half-line.

    Parameters
    ----------
    cell_width : float
        Cell width ``da > 0``.
    n_cells : int
        Number of cells; the truncated horizon is ``a_max = n_cells * da``.
    p : float
        Exponent of the L^p norm, ``p >= 1``.
    """

    cell_width: float
    n_cells: int
    p: float = 2.0

    def __post_init__(self):
        if not self.cell_width > 0:
            raise ValueError("cell_width must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError("n_cells must be a positive integer")
        if not self.p >= 1 or not np.isfinite(self.p):
            raise ValueError("p must be a finite real >= 1")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "cell_width", float(self.cell_width))
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def from_horizon(cls, a_max: float, cell_width: float, p: float = 2.0) -> "AgeGrid":
        n = a_max / cell_width
        m = int(round(n))
        if m < 1 or abs(n - m) > _ALIGN_RTOL * max(1.0, n):
            raise GridAlignmentError(
                f"a_max={a_max} is not a multiple of cell_width={cell_width}")
        return cls(cell_width, m, p)

    @property
    def a_max(self) -> float:
        return self.n_cells * self.cell_width

    @property
    def nodes(self) -> np.ndarray:
        """Left endpoints ``c*da`` of the cells."""
        return np.arange(self.n_cells) * self.cell_width

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.cell_width

    def steps(self, t: float) -> int:
        """Number of cells spanned by the time ``t``; rejects off-lattice times."""
        if t < 0:
            raise GridAlignmentError(f"time {t} is negative")
        x = t / self.cell_width
        m = int(round(x))
        if abs(x - m) > _ALIGN_RTOL * max(1.0, x):
            raise GridAlignmentError(
                f"time {t} is not a multiple of the cell width {self.cell_width}")
        return m

    def time(self, m: int) -> float:
        return m * self.cell_width

    def floor_steps(self, t: float) -> int:
        """Largest ``m`` with ``m*da <= t`` (up to the alignment slack)."""
        x = t / self.cell_width
        return int(np.floor(x + _ALIGN_RTOL * max(1.0, x)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Step function on an :class:`AgeGrid` with values in R^n.

    ``values`` has shape ``(n_cells, n)``; a 1-D array is read as ``n = 1``.
    The array is copied and frozen on construction.
    """

    grid: AgeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n_cells:
            raise ValueError(
                f"values must have shape ({self.grid.n_cells}, n), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: AgeGrid, n: int = 1) -> "GridFunction":
        return cls(grid, np.zeros((grid.n_cells, n)))

    @classmethod
    def constant(cls, grid: AgeGrid, value, n: int = 1) -> "GridFunction":
        v = np.broadcast_to(np.asarray(value, dtype=float), (n,))
        return cls(grid, np.tile(v, (grid.n_cells, 1)))

    @classmethod
    def from_function(cls, grid: AgeGrid, func: Callable, n: int = 1) -> "GridFunction":
        """Sample ``func(a)`` at cell midpoints; ``func`` is vectorised over ``a``."""
        vals = np.asarray(func(grid.midpoints), dtype=float)
        if vals.ndim == 1 and n > 1:
            vals = np.tile(vals[:, None], (1, n))
        return cls(grid, vals)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def _wrap(self, v) -> "GridFunction":
        return GridFunction(self.grid, v)

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self._wrap(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - self._other(other))

    def __rsub__(self, other):
        return self._wrap(self._other(other) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._wrap(self.values / scalar)

    def __neg__(self):
        return self._wrap(-self.values)

    def allclose(self, other: "GridFunction", atol: float = 1e-12) -> bool:
        return np.allclose(self.values, other.values, rtol=0.0, atol=atol)


@dataclass(frozen=True, eq=False)
class StatePair:
    """Element ``(x, phi)`` of R^n x L^p.

    States of the evolution live in the closed subspace with ``x = 0``.
    """

    boundary: np.ndarray
    density: GridFunction

    def __post_init__(self):
        x = np.array(self.boundary, dtype=float).reshape(-1)
        if x.shape[0] != self.density.n:
            raise ValueError("boundary and density dimensions differ")
        x.setflags(write=False)
        object.__setattr__(self, "boundary", x)

    @classmethod
    def of_density(cls, phi: GridFunction) -> "StatePair":
        return cls(np.zeros(phi.n), phi)

    @property
    def grid(self) -> AgeGrid:
        return self.density.grid

    def norm(self) -> float:
        """Product norm ``|x|_p + ||phi||_{L^p}``."""
        return vector_norm(self.boundary, self.grid.p) + lp_norm(self.density)

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.boundary + other.boundary, self.density + other.density)

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.boundary - other.boundary, self.density - other.density)

    def __mul__(self, scalar) -> "StatePair":
        return StatePair(self.boundary * scalar, self.density * scalar)

    __rmul__ = __mul__


def vector_norm(v, p: float) -> float:
    """l^p norm of a vector in R^n."""
    v = np.abs(np.asarray(v, dtype=float))
    if p == 1:
        return float(v.sum())
    return float(np.sum(v ** p) ** (1.0 / p))


def _cell_norms(values: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(values)
    if p == 1:
        return a.sum(axis=-1)
    return np.sum(a ** p, axis=-1) ** (1.0 / p)


def _lp_from_cells(cell_norms: np.ndarray, grid: AgeGrid) -> float:
    p = grid.p
    if p == 1:
        return float(cell_norms.sum() * grid.cell_width)
    return float((np.sum(cell_norms ** p) * grid.cell_width) ** (1.0 / p))


def lp_norm(f: GridFunction) -> float:
    """Exact L^p norm of the step function: ``(sum_c |f_c|_p^p * da)^(1/p)``."""
    return _lp_from_cells(_cell_norms(f.values, f.grid.p), f.grid)


def theta(v) -> np.ndarray | float:
    """Component sum over the last axis."""
    s = np.sum(np.asarray(v, dtype=float), axis=-1)
    return float(s) if np.ndim(s) == 0 else s


def chi(s, kappa: float):
    """Truncation ``min(kappa, max(s, 0))``."""
    out = np.minimum(kappa, np.maximum(s, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def shift_right(f: GridFunction, m: int) -> GridFunction:
    """Translate by ``m`` cells to the right, filling with zeros."""
    if m < 0:
        raise ValueError("shift must be non-negative")
    return GridFunction(f.grid, _shift_values(f.values, m))


def _shift_values(values: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros_like(values)
    n = values.shape[0]
    if m < n:
        out[m:] = values[:n - m]
    return out


def _capped_reduction(pos: np.ndarray, kappa: float) -> np.ndarray:
    """Water-filling reduction ``d = min(pos, lam)`` with ``sum d = excess``.

    This is the l^p-optimal way (any p >= 1) to remove the excess of
    ``sum(pos)`` over ``kappa`` while keeping every entry non-negative.
    """
    excess = pos.sum(axis=-1) - kappa
    d = np.zeros_like(pos)
    rows = np.nonzero(excess > 0)[0]
    if rows.size == 0:
        return d
    sub = pos[rows]
    e = excess[rows]
    srt = np.sort(sub, axis=-1)
    n = srt.shape[1]
    # f(lam) = sum min(pos, lam) is piecewise linear; locate the active piece
    csum = np.cumsum(srt, axis=-1)
    k = np.arange(n)
    # value of f at lam = srt[:, j]: csum[j-1] + srt[j]*(n-j)
    f_at = np.concatenate([np.zeros((sub.shape[0], 1)), csum[:, :-1]], axis=1) + srt * (n - k)
    j = np.sum(f_at < e[:, None], axis=1)
    j = np.minimum(j, n - 1)
    below = np.where(j > 0, np.take_along_axis(csum, np.maximum(j - 1, 0)[:, None], 1)[:, 0], 0.0)
    lam = (e - below) / (n - j)
    d[rows] = np.minimum(sub, lam[:, None])
    return d


def cell_distance_to_K(values: np.ndarray, kappa: float, p: float) -> np.ndarray:
    """l^p distance of each cell vector to ``K = {v >= 0, sum v <= kappa}``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] == 1:
        v = values[:, 0]
        return np.maximum(np.maximum(v - kappa, 0.0), -v)
    neg = np.minimum(values, 0.0)
    d = _capped_reduction(np.maximum(values, 0.0), kappa)
    return _cell_norms(np.concatenate([neg, d], axis=1), p)


def dist_to_C(f: GridFunction, kappa: float) -> float:
    """L^p distance from ``f`` to the constraint set C."""
    return _lp_from_cells(cell_distance_to_K(f.values, kappa, f.grid.p), f.grid)


def in_C(f: GridFunction, kappa: float, tol: float = 0.0) -> bool:
    return dist_to_C(f, kappa) <= tol


def project_to_C(f: GridFunction, kappa: float) -> GridFunction:
    """Map ``f`` into C cell by cell.

    For ``n = 1`` this is the clamp to ``[0, kappa]`` (the exact nearest
    point).  For ``n > 1`` negative components are clamped to zero first and
    the cell vector is then scaled uniformly down to ``sum = kappa`` when it
    exceeds the cap.  The second stage is only quasi-optimal: its error is at
    most ``n**(1 - 1/p)`` times the distance.
    """
    v = f.values
    if v.shape[1] == 1:
        return GridFunction(f.grid, np.minimum(np.maximum(v, 0.0), kappa))
    pos = np.maximum(v, 0.0)
    s = pos.sum(axis=1)
    scale = np.ones_like(s)
    over = s > kappa
    scale[over] = kappa / s[over]
    out = pos * scale[:, None]
    # rounding can leave the scaled sum a hair above kappa
    s2 = out.sum(axis=1)
    bad = s2 > kappa
    if np.any(bad):
        out[bad] = out[bad] * (kappa / s2[bad])[:, None]
        out[bad] = np.nextafter(out[bad], 0.0)
    return GridFunction(f.grid, out)
