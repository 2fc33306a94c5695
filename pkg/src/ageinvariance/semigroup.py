"""Transport semigroup and integrated semigroup of the age operator.

Functions take times in age units and reject times that are not integer
multiples of the cell width, so every action below is exact on step
functions.  The integrated semigroup is evaluated exactly at the left node
``a_c = c*da`` of each cell:

    S(t)(x, phi)(a_c) = x * exp(-gamma*a_c) * [a_c < t]
                        + int_0^t exp(-gamma*l) H(a_c - l) phi(a_c - l) dl,

and for a step ``phi`` the integral over ``l in ((j-1)da, j*da]`` picks up
exactly the cell ``c - j``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .lp_grid import (AgeGrid, GridFunction, StatePair, _cell_norms, _lp_from_cells,
                      _shift_values)

__all__ = [
    "apply_T0",
    "apply_T0_shifted",
    "apply_S",
    "apply_S_pair",
    "estimate_delta",
    "DeltaTable",
]


def transport_values(values: np.ndarray, m: int, grid: AgeGrid, gamma: float = 0.0) -> np.ndarray:
    out = _shift_values(values, m)
    if gamma:
        out *= np.exp(-gamma * m * grid.cell_width)
    return out


def _step_weights(m: int, grid: AgeGrid, gamma: float) -> np.ndarray:
    """Weights ``int_{(j-1)da}^{j da} exp(-gamma*l) dl`` for ``j = 1..m``."""
    da = grid.cell_width
    if gamma == 0.0:
        return np.full(m, da)
    j = np.arange(m)
    return np.exp(-gamma * j * da) * (-np.expm1(-gamma * da)) / gamma


def integrated_values(x: np.ndarray, values: np.ndarray, m: int, grid: AgeGrid,
                      gamma: float = 0.0) -> np.ndarray:
    """Array kernel of :func:`apply_S` with ``m`` given in cells."""
    N, n = values.shape
    out = np.zeros((N, n))
    if m == 0:
        return out
    mm = min(m, N)
    if gamma == 0.0:
        # direct windowed sum of values[c-j], j = 1..m; prefix sums would
        # cancel catastrophically on long grids
        for j in range(1, mm + 1):
            out[j:] += values[:N - j]
        out *= grid.cell_width
    else:
        w = _step_weights(mm, grid, gamma)
        for i in range(n):
            full = np.convolve(values[:, i], w)
            out[1:, i] = full[:N - 1]
    x = np.asarray(x, dtype=float).reshape(1, -1)
    decay = np.exp(-gamma * grid.nodes[:mm])[:, None] if gamma else 1.0
    out[:mm] += x * decay
    return out


def apply_T0(f: GridFunction, t: float) -> GridFunction:
    """Transport semigroup: ``(T(t)f)(a) = f(a - t)`` for ``a >= t``, else 0."""
    m = f.grid.steps(t)
    return GridFunction(f.grid, transport_values(f.values, m, f.grid))


def apply_T0_shifted(f: GridFunction, t: float, gamma: float) -> GridFunction:
    """Semigroup of the shifted operator ``A - gamma*I``: ``exp(-gamma t) T(t) f``."""
    m = f.grid.steps(t)
    return GridFunction(f.grid, transport_values(f.values, m, f.grid, gamma))


def apply_S(x, f: GridFunction, t: float, gamma: float = 0.0) -> GridFunction:
    """Integrated semigroup applied to the pair ``(x, f)``.

    Returns the density component; the boundary component of ``S(t)(x, f)``
    is identically zero.

    Parameters
    ----------
    x : array_like, shape (n,)
        Boundary (birth) vector.
    f : GridFunction
        Density forcing.
    t : float
        Grid-aligned time.
    gamma : float
        Scalar shift; ``gamma = 0`` gives the unperturbed family.
    """
    m = f.grid.steps(t)
    return GridFunction(f.grid, integrated_values(x, f.values, m, f.grid, gamma))


def apply_S_pair(v: StatePair, t: float, gamma: float = 0.0) -> GridFunction:
    return apply_S(v.boundary, v.density, t, gamma)


# -- semi-variation estimate --------------------------------------------------

class DeltaTable:
    """Empirical, non-decreasing estimate of the semi-variation bound ``delta``.

    For every lattice time ``s <= t_max`` the table holds the largest
    ``||(S diamond f)(s)||`` found over a family of step forcings with
    ``sup ||f|| <= 1`` in the product norm, followed by a running maximum in
    ``s``.  The family contains ``trials`` random forcings plus the
    two-block forcings that put a unit boundary impulse on the last ``k``
    cells of ``[0, s]`` and a unit constant density on the rest, which are
    the extremal directions for this operator.
    """

    def __init__(self, grid: AgeGrid, t_max: float, trials: int = 32, seed: int = 0,
                 gamma: float = 0.0):
        if trials < 1:
            raise ValueError("trials must be >= 1")
        self.grid = grid
        self.gamma = float(gamma)
        self.trials = int(trials)
        self.seed = seed
        self.M = grid.floor_steps(t_max)
        if grid.time(self.M) < t_max * (1 - 1e-12):
            self.M += 1
        raw = np.maximum(self._structured(), self._random())
        raw[0] = 0.0
        self.raw = raw
        self.values = np.maximum.accumulate(raw)

    def __call__(self, t: float) -> float:
        if t <= 0:
            return 0.0
        m = int(np.ceil(t / self.grid.cell_width - 1e-9))
        if m > self.M:
            raise ValueError(f"t={t} exceeds the tabulated horizon {self.grid.time(self.M)}")
        return float(self.values[m])

    @property
    def t_max(self) -> float:
        return self.grid.time(self.M)

    def _structured(self) -> np.ndarray:
        g, M, gamma = self.grid, self.M, self.gamma
        N, p, da = g.n_cells, g.p, g.cell_width
        phi = np.full((N, 1), 1.0 / g.a_max ** (1.0 / p))
        unit_S = integrated_values(np.zeros(1), phi, 1, g, gamma)
        # D[r] = S(r*da)(0, phi); prefix[r][c] = sum_{i<c} |D_r[i]|^p * da
        prefix = np.zeros((M + 1, N + 1))
        D = np.zeros((N, 1))
        for r in range(1, M + 1):
            D = transport_values(D, 1, g, gamma) + unit_S
            prefix[r, 1:] = np.cumsum(np.abs(D[:, 0]) ** p) * da
        nodes = np.arange(M + 1) * da
        bnd = np.concatenate([[0.0], np.cumsum(np.exp(-p * gamma * nodes[:M])) * da])
        out = np.zeros(M + 1)
        for s in range(1, M + 1):
            k = np.arange(s + 1)
            r = s - k
            tail = prefix[r, np.maximum(N - k, 0)] * np.exp(-p * gamma * k * da)
            out[s] = np.max((bnd[k] + tail) ** (1.0 / p))
        return out

    def _random(self) -> np.ndarray:
        g, M, gamma = self.grid, self.M, self.gamma
        N, p = g.n_cells, g.p
        rng = np.random.default_rng(self.seed)
        best = np.zeros(M + 1)
        for _ in range(self.trials):
            n_pieces = int(rng.integers(1, max(2, min(M, 12)) + 1))
            cuts = np.sort(rng.choice(np.arange(1, M), size=min(n_pieces - 1, M - 1),
                                      replace=False)) if M > 1 else np.array([], int)
            bounds = np.concatenate([[0], cuts, [M]]).astype(int)
            v = np.zeros((N, 1))
            piece = 0
            x, phi = _random_unit_pair(g, rng)
            for step in range(M):
                if step == bounds[piece + 1]:
                    piece += 1
                    x, phi = _random_unit_pair(g, rng)
                v = transport_values(v, 1, g, gamma) + integrated_values(x, phi, 1, g, gamma)
                best[step + 1] = max(best[step + 1], _lp_from_cells(_cell_norms(v, p), g))
        return best


def _random_unit_pair(grid: AgeGrid, rng: np.random.Generator):
    """Random ``(x, phi)`` with ``|x| + ||phi|| = 1``."""
    alpha = rng.uniform()
    x = np.array([alpha * rng.choice([-1.0, 1.0])])
    prof = rng.uniform(-0.2, 1.0, size=(grid.n_cells, 1))
    nrm = _lp_from_cells(_cell_norms(prof, grid.p), grid)
    phi = prof * ((1.0 - alpha) / nrm) if nrm > 0 else prof * 0.0
    return x, phi


@lru_cache(maxsize=32)
def _cached_table(grid: AgeGrid, t_max: float, trials: int, seed: int, gamma: float) -> DeltaTable:
    return DeltaTable(grid, t_max, trials, seed, gamma)


def estimate_delta(grid: AgeGrid, t: float, trials: int = 32, seed: int = 0,
                   gamma: float = 0.0) -> float:
    """Empirical ``delta(t)`` for the (shifted) integrated semigroup.

    See :class:`DeltaTable`; results are cached per argument tuple.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return _cached_table(grid, float(t), int(trials), int(seed), float(gamma))(t)
