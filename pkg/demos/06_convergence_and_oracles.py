"""Convergence under halving eps, compared with two reference solvers.

The Picard fixed point of the variation-of-constants formula and an
independent method-of-characteristics solver are run to tau = 1.
"""

from dataclasses import replace

from ageinvariance.config import DEFAULT_INI, parse_config
from ageinvariance.oracles import characteristics_solve, picard_solve, sup_distance
from ageinvariance.scheme import converge_run

rc = parse_config(DEFAULT_INI)
cfg = replace(rc.scheme, epsilon=0.1, tau=1.0)
conv = converge_run(rc.x0, cfg, rc.params, levels=4)
pic = picard_solve(rc.x0, 1.0, 200, rc.params)
char = characteristics_solve(rc.x0, 1.0, rc.params)

print("    eps   knots   sup diff to next level   vs Picard")
for i, (e, tr) in enumerate(zip(conv.epsilons, conv.trajectories)):
    nxt = f"{conv.cauchy[i]:.3e}" if i < len(conv.cauchy) else "-"
    print(f"{e:7.4f}  {len(tr.knots):5d}   {nxt:>22s}   {sup_distance(tr.samples, pic.samples):.3e}")
print(f"\nPicard: {pic.iterations} iterations, ratios up to {max(pic.ratios):.3f}")
print(f"Picard vs characteristics: {sup_distance(pic.samples, char):.3e}")
