"""Transport semigroup, integrated semigroup and the empirical delta(t).

T(t) is an exact shift on the lattice, so the semigroup law holds
bitwise.  S(t) integrates a boundary value and a density; its translation
identity holds to round-off.  delta(t) bounds the convolution by the
forcing size and behaves like sqrt(t) for small t in L^2.
"""

import numpy as np

from ageinvariance.lp_grid import AgeGrid, GridFunction, lp_norm
from ageinvariance.semigroup import DeltaTable, apply_S, apply_T0, integrated_values

grid = AgeGrid.from_horizon(10.0, 0.01)
rng = np.random.default_rng(1)
f = GridFunction(grid, rng.normal(size=(grid.n_cells, 1)))
x = np.array([0.7])

same = np.array_equal(apply_T0(f, 0.37).values, apply_T0(apply_T0(f, 0.12), 0.25).values)
print(f"T(0.37) == T(0.25) T(0.12) bitwise: {same}")

lhs = integrated_values(x, f.values, 50, grid)
rhs = apply_S(x, f, 0.3).values + apply_T0(GridFunction(grid, integrated_values(x, f.values, 20, grid)), 0.3).values
print(f"S(0.5) - S(0.3) - T(0.3) S(0.2): {lp_norm(GridFunction(grid, lhs - rhs)):.2e}")

delta = DeltaTable(grid, 2.0, trials=32, seed=0)
print("      t   delta(t)   delta/sqrt(t)")
for t in (0.01, 0.04, 0.16, 0.64, 1.0, 2.0):
    print(f"{t:7.2f}   {delta(t):8.4f}   {delta(t) / np.sqrt(t):8.4f}")
