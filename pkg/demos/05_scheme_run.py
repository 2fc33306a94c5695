"""Adaptive knot scheme on the default configuration.

Runs the scheme to tau = 2, reports the knot grid, the distance of the
sampled trajectory to C and the a posteriori certificates.
"""

import numpy as np

from ageinvariance.config import DEFAULT_INI, parse_config
from ageinvariance.lp_grid import lp_norm
from ageinvariance.scheme import run_certificates, run_scheme

rc = parse_config(DEFAULT_INI)
traj = run_scheme(rc.x0, rc.scheme, rc.params)
etas = np.array([k.eta for k in traj.knots[1:]])
print(f"terminated by {traj.terminated_by} with {len(traj.knots)} knots")
print(f"accepted steps: min {etas.min():.3f}, max {etas.max():.3f}")
print(f"sup dist(u_eps, C) = {traj.defect_sup:.2e}")
print(f"max ||H|| = {max(lp_norm(k.H) for k in traj.knots):.2e} (eps/2 = {rc.scheme.epsilon / 2})")
for t, u in traj.samples[::40]:
    print(f"t = {t:4.2f}   ||u|| = {lp_norm(u):.5f}")
cert = run_certificates(traj, rc.scheme, rc.params)
for key in ("lambda_hat", "gamma_hat", "delta_tau", "contraction", "growth_sup", "rho", "satisfied"):
    print(f"{key:12s} {cert[key]}")
