"""Grid functions, the density band C and the map into it.

For one species the clamp to [0, kappa] is the nearest point of C, so the
distance and the projection error coincide.  For two species the
distance is computed exactly by water-filling while the projection clamps
and rescales, which lands in C but is only quasi-optimal.
"""

import numpy as np

from ageinvariance.lp_grid import AgeGrid, GridFunction, dist_to_C, lp_norm, project_to_C

grid = AgeGrid.from_horizon(10.0, 0.01, p=2)
rng = np.random.default_rng(0)
print(f"grid: {grid.n_cells} cells of width {grid.cell_width}")

for n in (1, 2):
    phi = GridFunction(grid, rng.normal(0.8 / n, 0.5, size=(grid.n_cells, n)))
    proj = project_to_C(phi, kappa=1.0)
    print(f"\nn = {n}")
    print(f"  ||phi||_2            = {lp_norm(phi):.6f}")
    print(f"  dist(phi, C)         = {dist_to_C(phi, 1.0):.6f}")
    print(f"  ||phi - P(phi)||_2   = {lp_norm(phi - proj):.6f}   (bound {n ** 0.5:.3f} x dist)")
    print(f"  dist(P(phi), C)      = {dist_to_C(proj, 1.0):.3g}")
    print(f"  max total of P(phi)  = {proj.values.sum(axis=1).max():.6f}")
