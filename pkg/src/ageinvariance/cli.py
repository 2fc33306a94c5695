"""Command-line front end.

Usage::

    ageinv simulate --config run.ini --out results/
    ageinv convergence --levels 4
    ageinv invariance-report | oracle-compare | subtangency | conv-tests

Without ``--config`` the built-in default configuration is used.  Every
subcommand writes a JSON report (and most a CSV table) into ``--out``;
files are written atomically and are byte-identical for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import scheme as sch
from .config import ConfigError, RunConfig, load_config
from .convolution import (StepForcing, cocycle_check, random_step_forcing, s_diamond_bound_check,
                          s_diamond_indicator, s_diamond_step)
from .lp_grid import StatePair, dist_to_C, lp_norm
from .model import (check_beta_condition, h0_bound, sample_state_in_C, subtangency_defect,
                    vhat1, vhat2)
from .oracles import characteristics_solve, picard_solve, riemann_diamond, sup_distance
from .semigroup import DeltaTable

log = logging.getLogger("ageinvariance")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


# -- output helpers ------------------------------------------------------------

def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n")


def write_csv(path: str, header: list, rows: list) -> None:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _beta_json(params) -> dict:
    b = check_beta_condition(params)
    return {"value": b.value, "integral": b.integral, "bound": b.bound, "margin": b.margin}


def _delta(rc: RunConfig, t_max: float, gamma: float = 0.0) -> DeltaTable:
    return DeltaTable(rc.grid, max(t_max, rc.grid.cell_width), trials=rc.delta_trials,
                      seed=rc.seed, gamma=gamma)


# -- subcommands ---------------------------------------------------------------

def _trajectory_rows(traj_knots, samples, params) -> list:
    g = params.grid
    cells = [g.steps(k.l) for k in traj_knots]
    rows = []
    for t, u in samples:
        m = g.steps(t)
        i = int(np.searchsorted(cells, m, side="left"))
        if m == 0 or i >= len(traj_knots):
            hn, eta = 0.0, 0.0
        else:
            hn, eta = lp_norm(traj_knots[i].H), traj_knots[i].eta
        rows.append([t, lp_norm(u), dist_to_C(u, params.kappa), hn, eta])
    return rows


def cmd_simulate(rc: RunConfig, out: str) -> int:
    params, cfg = rc.params, rc.scheme
    header = ["t", "lp_norm_u", "dist_to_C", "H_norm", "eta_accepted"]
    try:
        traj = sch.run_scheme(rc.x0, cfg, params)
    except sch.StepSizeCollapse as exc:
        samples = sch.sample_trajectory(exc.knots, cfg, params)
        write_csv(os.path.join(out, "simulate.csv"), header,
                  _trajectory_rows(exc.knots, samples, params))
        write_json(os.path.join(out, "simulate.json"), {
            "error": str(exc), "terminated_by": "step_size_collapse", "knots": len(exc.knots),
            "beta_condition": _beta_json(params), "h0": h0_bound(params), "config": rc.echo})
        log.error("step-size collapse: %s", exc)
        return EXIT_RUN
    delta = _delta(rc, max(cfg.tau, cfg.epsilon), cfg.gamma)
    cert = sch.run_certificates(traj, cfg, params, delta)
    write_csv(os.path.join(out, "simulate.csv"), header,
              _trajectory_rows(traj.knots, traj.samples, params))
    knot_defect = max(dist_to_C(k.y, params.kappa) for k in traj.knots)
    report = {
        "beta_condition": _beta_json(params),
        "h0": h0_bound(params),
        "paper_regime": {
            "lambda_hat": cert["lambda_hat"],
            "gamma_hat": cert["gamma_hat"],
            "delta_tau": cert["delta_tau"],
            "satisfied": cert["satisfied"],
            "radius_sup": cert["growth_sup"],
            "rho": cert["rho"],
            "contraction": cert["contraction"],
            "assumption": "M=1, omega=-gamma; continuity of F probed at finitely many points",
        },
        "knots": len(traj.knots),
        "knot_defect_sup": knot_defect,
        "defect_sup": traj.defect_sup,
        "defect_bound": cert["defect_bound"],
        "segment_sup": cert["segment_sup"],
        "segment_bound": cert["segment_bound"],
        "knot_drift_slack": cert["knot_drift_slack"],
        "norm_sup": cert["norm_sup"],
        "H_norm_sup": max(lp_norm(k.H) for k in traj.knots),
        "epsilon": cfg.epsilon,
        "tau": cfg.tau,
        "terminated_by": traj.terminated_by,
        "config": rc.echo,
    }
    write_json(os.path.join(out, "simulate.json"), report)
    log.info("simulate: %d knots, defect_sup=%.3e, terminated_by=%s",
             len(traj.knots), traj.defect_sup, traj.terminated_by)
    return EXIT_OK


def cmd_convergence(rc: RunConfig, out: str) -> int:
    params = rc.params
    cfg = replace(rc.scheme, epsilon=rc.convergence_epsilon, tau=rc.compare_tau)
    try:
        res = sch.converge_run(rc.x0, cfg, params, rc.levels)
    except sch.SchemeError as exc:
        log.error("convergence run failed: %s", exc)
        write_json(os.path.join(out, "convergence.json"), {"error": str(exc), "config": rc.echo})
        return EXIT_RUN
    cauchy = res.cauchy
    rows = []
    for j, (e, tr) in enumerate(zip(res.epsilons, res.trajectories)):
        rows.append([j, e, len(tr.knots), tr.defect_sup, cauchy[j] if j < len(cauchy) else ""])
    write_csv(os.path.join(out, "convergence.csv"),
              ["level", "epsilon", "knots", "defect_sup", "cauchy_next"], rows)
    write_json(os.path.join(out, "convergence.json"), {
        "epsilons": res.epsilons,
        "tau": cfg.tau,
        "cauchy": cauchy,
        "strictly_decreasing": all(a > b for a, b in zip(cauchy, cauchy[1:])),
        "knots": [len(t.knots) for t in res.trajectories],
        "defect_sup": [t.defect_sup for t in res.trajectories],
        "terminated_by": [t.terminated_by for t in res.trajectories],
        "beta_condition": _beta_json(params),
        "config": rc.echo,
    })
    log.info("convergence: cauchy=%s", ", ".join(f"{c:.3e}" for c in cauchy))
    return EXIT_OK


def cmd_invariance_report(rc: RunConfig, out: str) -> int:
    params, cfg = rc.params, rc.scheme
    g, kappa = rc.grid, params.kappa
    h0 = h0_bound(params)
    # monotonicity of s -> (1 - h mu (kappa - s)) s on [0, kappa] at h = h0
    s = np.linspace(0.0, kappa, 2001)
    mono = min(float(np.min(np.diff((1 - h0 * m * (kappa - s)) * s)))
               for m in (params.mu_minus, params.mu_sup))
    rng = np.random.default_rng(rc.seed)
    hs = sorted({h for h in rc.subtangency_h if h <= h0}
                | {g.time(g.floor_steps(min(h0, g.a_max)))})
    worst = 0.0
    for _ in range(rc.subtangency_states):
        phi = sample_state_in_C(params, rng)
        for h in hs:
            worst = max(worst, dist_to_C(vhat1(phi, h, params), kappa))
    report = {
        "beta_condition": _beta_json(params),
        "h0": h0,
        "h0_monotone_min_increment": mono,
        "h0_monotone": bool(mono >= 0),
        "vhat1_defect_max": worst,
        "vhat1_steps": hs,
        "vhat1_states": rc.subtangency_states,
        "config": rc.echo,
    }
    try:
        traj = sch.run_scheme(rc.x0, cfg, params)
        delta = _delta(rc, max(cfg.tau, cfg.epsilon), cfg.gamma)
        cert = sch.run_certificates(traj, cfg, params, delta, pairs=False)
        report.update({
            "knots": len(traj.knots),
            "knot_defect_sup": max(dist_to_C(k.y, kappa) for k in traj.knots),
            "defect_sup": traj.defect_sup,
            "defect_mean": float(np.mean(traj.defects)),
            "defect_bound": cert["defect_bound"],
            "defect_within_bound": bool(traj.defect_sup <= cert["defect_bound"]),
            "terminated_by": traj.terminated_by,
        })
    except sch.SchemeError as exc:
        report.update({"scheme_error": str(exc), "terminated_by": "step_size_collapse"})
    write_json(os.path.join(out, "invariance.json"), report)
    log.info("invariance-report: beta_condition=%s, vhat1_defect_max=%.3e",
             report["beta_condition"]["value"], worst)
    return EXIT_OK


def cmd_oracle_compare(rc: RunConfig, out: str) -> int:
    params, g = rc.params, rc.grid
    tau = rc.compare_tau
    cfg = replace(rc.scheme, tau=tau)
    try:
        traj = sch.run_scheme(rc.x0, cfg, params)
    except sch.SchemeError as exc:
        log.error("scheme failed: %s", exc)
        return EXIT_RUN
    pic = picard_solve(rc.x0, tau, rc.picard_iters, params, delta=_delta(rc, tau), seed=rc.seed)
    chars = characteristics_solve(rc.x0, tau, params)
    sa = {g.steps(t): u for t, u in traj.samples}
    pa = {g.steps(t): u for t, u in pic.samples}
    rows = []
    for t, c in chars:
        m = g.steps(t)
        s, p = sa[m], pa[m]
        rows.append([t, lp_norm(s), lp_norm(p), lp_norm(c),
                     dist_to_C(s, params.kappa), dist_to_C(p, params.kappa),
                     dist_to_C(c, params.kappa),
                     lp_norm(s - p), lp_norm(s - c), lp_norm(p - c)])
    write_csv(os.path.join(out, "oracle_compare.csv"),
              ["t", "lp_norm_scheme", "lp_norm_picard", "lp_norm_characteristics",
               "dist_to_C_scheme", "dist_to_C_picard", "dist_to_C_characteristics",
               "scheme_vs_picard", "scheme_vs_characteristics", "picard_vs_characteristics"],
              rows)
    write_json(os.path.join(out, "oracle_compare.json"), {
        "tau": tau,
        "epsilon": cfg.epsilon,
        "scheme_vs_picard": sup_distance(traj.samples, pic.samples),
        "scheme_vs_characteristics": sup_distance(traj.samples, chars),
        "picard_vs_characteristics": sup_distance(pic.samples, chars),
        "picard_iterations": pic.iterations,
        "picard_converged": pic.converged,
        "picard_ratio_max": max(pic.ratios) if pic.ratios else 0.0,
        "picard_windows": pic.windows,
        "picard_lambda_hat": pic.lambda_hat,
        "config": rc.echo,
    })
    log.info("oracle-compare: picard vs characteristics = %.3e",
             sup_distance(pic.samples, chars))
    return EXIT_OK


def cmd_subtangency(rc: RunConfig, out: str) -> int:
    params = rc.params
    rng = np.random.default_rng(rc.seed)
    hs = sorted(rc.subtangency_h, reverse=True)
    rows, dec_d, dec_r = [], [], []
    for i in range(rc.subtangency_states):
        phi = sample_state_in_C(params, rng)
        d = [subtangency_defect(phi, h, params) for h in hs]
        r = [lp_norm(vhat2(phi, h, params)) / h for h in hs]
        rows.extend([i, h, a, b] for h, a, b in zip(hs, d, r))
        dec_d.append(all(x > y for x, y in zip(d, d[1:])))
        dec_r.append(all(x > y for x, y in zip(r, r[1:])))
    write_csv(os.path.join(out, "subtangency.csv"), ["state", "h", "defect", "vhat2_over_h"], rows)
    write_json(os.path.join(out, "subtangency.json"), {
        "h": hs,
        "defect_strictly_decreasing": dec_d,
        "vhat2_strictly_decreasing": dec_r,
        "all_decreasing": all(dec_d) and all(dec_r),
        "beta_condition": _beta_json(params),
        "config": rc.echo,
    })
    log.info("subtangency: %d/%d states decreasing", sum(a and b for a, b in zip(dec_d, dec_r)),
             len(dec_d))
    return EXIT_OK


def cmd_conv_tests(rc: RunConfig, out: str) -> int:
    g = rc.grid
    rng = np.random.default_rng(rc.seed)
    da = g.cell_width
    span = 50 * da
    delta = _delta(rc, span)
    oracle_err = 0.0
    for _ in range(5):
        f = random_step_forcing(g, 0.0, span, 3, rng)
        t = g.time(int(rng.integers(1, 51)))
        oracle_err = max(oracle_err, lp_norm(s_diamond_step(f, t) - riemann_diamond(f, t)))
        x = f.pieces[0]
        a = g.time(int(rng.integers(0, 20)))
        b = a + g.time(int(rng.integers(1, 20)))
        ind = _indicator_forcing(x, a, b, span)
        oracle_err = max(oracle_err, lp_norm(s_diamond_indicator(x, a, b, span)
                                             - riemann_diamond(ind, span)))
    cocycle = 0.0
    for _ in range(20):
        f = random_step_forcing(g, 0.0, span, 4, rng)
        t = int(rng.integers(0, 51))
        s = int(rng.integers(0, 51 - t))
        cocycle = max(cocycle, cocycle_check(f, g.time(t), g.time(s)))
    holds, ratio = 0, 0.0
    for _ in range(100):
        f = random_step_forcing(g, 0.0, span, int(rng.integers(1, 6)), rng)
        lhs, rhs, ok = s_diamond_bound_check(f, span, delta)
        holds += ok
        ratio = max(ratio, lhs / rhs if rhs > 0 else 0.0)
    write_json(os.path.join(out, "conv_tests.json"), {
        "oracle_max_error": oracle_err,
        "oracle_ok": bool(oracle_err <= 1e-6),
        "cocycle_max_defect": cocycle,
        "cocycle_ok": bool(cocycle <= 1e-12),
        "bound_holds": holds,
        "bound_trials": 100,
        "bound_max_ratio": ratio,
        "config": rc.echo,
    })
    log.info("conv-tests: oracle %.2e, cocycle %.2e, bound %d/100", oracle_err, cocycle, holds)
    return EXIT_OK


def _indicator_forcing(x: StatePair, a: float, b: float, t_end: float) -> StepForcing:
    """Forcing ``1_[a,b) x`` on ``[0, t_end]``."""
    zero = x * 0.0
    bp, pcs = [0.0], []
    if a > 0:
        bp.append(a)
        pcs.append(zero)
    bp.append(b)
    pcs.append(x)
    if t_end > b:
        bp.append(t_end)
        pcs.append(zero)
    return StepForcing(tuple(bp), tuple(pcs))


COMMANDS = {
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "invariance-report": cmd_invariance_report,
    "oracle-compare": cmd_oracle_compare,
    "subtangency": cmd_subtangency,
    "conv-tests": cmd_conv_tests,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ageinv", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", default=None, help="INI file (built-in default if omitted)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override [run] seed")
    ap.add_argument("--levels", type=int, default=None, help="levels for `convergence`")
    ap.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        rc = load_config(args.config, args.seed)
        if args.levels is not None:
            if args.levels < 2:
                raise ConfigError("--levels", "must be >= 2")
            rc = replace(rc, levels=args.levels)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return COMMANDS[args.command](rc, args.out)


if __name__ == "__main__":
    sys.exit(main())
