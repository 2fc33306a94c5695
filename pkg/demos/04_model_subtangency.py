"""One-step behaviour of the population model near the density band.

For states in C the explicit step stays in C for every step up to
h0 = 1/(sup mu * kappa) when the birth integral is small enough.  The
sub-tangency defect shrinks faster than linearly with h.  With a birth
integral above 4/kappa the same step leaves C.
"""

import numpy as np

from ageinvariance.config import DEFAULT_INI, parse_config
from ageinvariance.lp_grid import GridFunction, dist_to_C, lp_norm
from ageinvariance.model import (check_beta_condition, constant_on_support, h0_bound,
                                 sample_state_in_C, subtangency_defect, vhat1, vhat2)

rc = parse_config(DEFAULT_INI)
P = rc.params
rng = np.random.default_rng(3)
phi = sample_state_in_C(P, rng)

print(f"beta condition: {check_beta_condition(P)}")
print(f"h0 = {h0_bound(P)}")
worst = max(dist_to_C(vhat1(phi, rc.grid.time(m), P), P.kappa) for m in range(1, 201))
print(f"max dist(vhat1, C) over h <= h0: {worst:.2e}")
print("     h   ||vhat2||/h    defect")
for h in (0.08, 0.04, 0.02, 0.01):
    print(f"{h:6.2f}   {lp_norm(vhat2(phi, h, P)) / h:10.3e}   {subtangency_defect(phi, h, P):9.3e}")

big = P.with_beta(constant_on_support(rc.grid, 4.0, P.a_dagger))
half = GridFunction.constant(rc.grid, 0.5)
print(f"\nint beta = {big.beta_integral:.1f}: condition {check_beta_condition(big).value}, "
      f"dist(vhat1(0.5, 0.1), C) = {dist_to_C(vhat1(half, 0.1, big), 1.0):.3f}")
