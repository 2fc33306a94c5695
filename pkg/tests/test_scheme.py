import math

import numpy as np
import pytest

from conftest import bump
from ageinvariance.lp_grid import GridFunction, dist_to_C, lp_norm
from ageinvariance.model import ModelParams, sample_state_in_C
from ageinvariance.scheme import (DivergenceDetected, Knot, KnotCapExceeded, SchemeConfig,
                                  StepSizeCollapse, advance_knot, assemble_u_eps, build_knots,
                                  converge_run, global_form, mild_residual, run_certificates,
                                  run_scheme, trial_step)
from ageinvariance.semigroup import DeltaTable


@pytest.fixture(scope="module")
def run_default(params, x0):
    cfg = SchemeConfig(0.05, 1.0, seed=1)
    return cfg, run_scheme(x0, cfg, params)


def test_config_validation():
    for bad in (dict(epsilon=0.0, tau=1), dict(epsilon=1.0, tau=1), dict(epsilon=0.1, tau=0),
                dict(epsilon=0.1, tau=1, gamma=-1), dict(epsilon=0.1, tau=1, rho=0),
                dict(epsilon=0.1, tau=1, max_knots=0)):
        with pytest.raises(ValueError):
            SchemeConfig(**bad)


def test_trial_step_at_fixed_point(grid, params):
    z = GridFunction.zeros(grid)
    for eps in (0.1, 0.05, 0.037):
        eta = trial_step(0.0, z, eps, SchemeConfig(eps, 1.0), params)
        assert eta == pytest.approx(grid.time(grid.floor_steps(eps)))
    assert trial_step(0.0, z, 0.1, SchemeConfig(0.1, 1.0, rho=0.03), params) == pytest.approx(0.03)


def test_trial_step_shrinks_with_eps(grid, params, x0):
    etas = [trial_step(0.0, x0, e, SchemeConfig(e, 1.0), params) for e in (0.1, 0.05, 0.025)]
    assert etas[0] >= etas[1] >= etas[2] > 0
    assert all(eta <= e + 1e-12 for eta, e in zip(etas, (0.1, 0.05, 0.025)))


def test_trial_step_near_cap(grid, params):
    # Theta = kappa on a band of ages, low density elsewhere
    a = grid.midpoints
    y = GridFunction(grid, np.where((a > 3) & (a < 3.5), 1.0, 0.0) * 0.1 + 0.0)
    y = GridFunction(grid, np.clip(y.values + np.where((a > 3.1) & (a < 3.3), 0.9, 0)[:, None], 0, 1))
    assert np.any(y.values == 1.0)
    eta = trial_step(0.0, y, 0.5, SchemeConfig(0.5, 1.0), params)
    assert eta > 0


def test_advance_knot_cases(grid, params, x0):
    eps = 0.05
    cfg = SchemeConfig(eps, 1.0)
    z = GridFunction.zeros(grid)
    k = advance_knot(Knot(0.0, z, z, 0.0), 0.04, eps, cfg, params)
    assert lp_norm(k.y) == 0 and lp_norm(k.H) == 0 and k.l == pytest.approx(0.02)
    k = advance_knot(Knot(0.0, x0, z, 0.0), 0.02, eps, cfg, params)
    assert lp_norm(k.H) <= 1e-12
    # sharp front: the predictor goes negative behind it and the projection is active
    a = grid.midpoints
    y = GridFunction(grid, np.where((a >= 1) & (a < 3), 0.9, 0.0))
    k = advance_knot(Knot(0.0, y, z, 0.0), 0.08, 0.5, SchemeConfig(0.5, 1.0), params)
    assert 0 < lp_norm(k.H) <= 0.25
    assert dist_to_C(k.y, 1.0) == 0
    k = advance_knot(Knot(0.0, y, z, 0.0), 0.08, 0.5, SchemeConfig(0.5, 1.0), params, t_end=0.01)
    assert k.l == pytest.approx(0.01)


def test_build_knots_zero_data(grid, params):
    z = GridFunction.zeros(grid)
    knots = build_knots(z, SchemeConfig(0.1, 1.0), params)
    assert all(lp_norm(k.y) == 0 for k in knots)
    assert len(knots) - 1 == math.ceil(1.0 / 0.05)
    assert knots[-1].l == pytest.approx(1.0)


def test_knot_invariants(run_default, params):
    cfg, tr = run_default
    ls = [k.l for k in tr.knots]
    assert tr.terminated_by == "horizon" and ls[-1] == pytest.approx(1.0)
    assert all(b > a for a, b in zip(ls, ls[1:]))
    for k in tr.knots:
        assert dist_to_C(k.y, params.kappa) <= 1e-12
        assert lp_norm(k.H) <= cfg.epsilon / 2


def test_knot_count_roughly_doubles(params, x0):
    n1 = len(build_knots(x0, SchemeConfig(0.1, 1.0), params))
    n2 = len(build_knots(x0, SchemeConfig(0.05, 1.0), params))
    assert 1.5 <= (n2 - 1) / (n1 - 1) <= 3.0


def test_assemble_u_eps(run_default, params, x0):
    cfg, tr = run_default
    g = params.grid
    assert assemble_u_eps(tr.knots, 0.0, cfg, params).allclose(x0, 0)
    for k in tr.knots:
        assert assemble_u_eps(tr.knots, k.l, cfg, params) is k.y
    # the segment formula reaches the next knot from the left
    from ageinvariance.scheme import _segment_value
    for k0, k1 in zip(tr.knots[:-1], tr.knots[1:]):
        off = g.steps(k1.l) - g.steps(k0.l)
        left = _segment_value(k0, k1, off, cfg.gamma, params)
        assert lp_norm(GridFunction(g, left) - k1.y) <= 1e-12
    for t in (0.01, 0.33, 0.57, 0.99):
        u = assemble_u_eps(tr.knots, t, cfg, params)
        assert lp_norm(u - global_form(tr.knots, t, cfg, params)) <= 1e-10
    with pytest.raises(ValueError):
        assemble_u_eps(tr.knots, 1.5, cfg, params)


def test_samples_interpolate_knots(run_default, params):
    _, tr = run_default
    sample = {params.grid.steps(t): u for t, u in tr.samples}
    for k in tr.knots:
        assert sample[params.grid.steps(k.l)] is k.y
    assert len(tr.samples) == params.grid.steps(1.0) + 1


def test_certificates(run_default, params):
    cfg, tr = run_default
    D = DeltaTable(params.grid, 1.0, seed=0)
    c = run_certificates(tr, cfg, params, D)
    assert c["knot_drift_slack"] >= 0
    assert c["segment_sup"] <= c["segment_bound"]
    assert c["norm_sup"] <= tr.rho
    assert tr.defect_sup <= c["defect_bound"]
    assert c["beta_condition"] and c["radius_ok"]
    assert c["contraction"] == pytest.approx(c["lambda_hat"] * c["delta_tau"])
    res, ratio = mild_residual(tr, cfg, params, D)
    assert np.isfinite(ratio) and res < 0.05


def test_step_size_collapse_for_dense_data(grid, params):
    # the transport modulus of a dense newborn cohort exceeds small eps at one cell
    x0 = bump(grid, 0.9)
    with pytest.raises(StepSizeCollapse) as info:
        build_knots(x0, SchemeConfig(0.0125, 1.0), params)
    assert len(info.value.knots) >= 1


def test_knot_cap_and_divergence(params, x0):
    with pytest.raises(KnotCapExceeded):
        build_knots(x0, SchemeConfig(0.1, 1.0, max_knots=3), params)
    tr = run_scheme(x0, SchemeConfig(0.1, 1.0, max_knots=3), params)
    assert tr.terminated_by == "knot_cap" and len(tr.knots) == 4
    # a working radius far below ||x0|| trips the divergence detector
    big = bump(params.grid, 0.2)
    with pytest.raises(DivergenceDetected):
        build_knots(big, SchemeConfig(0.1, 1.0, rho=0.01), params)
    tr = run_scheme(big, SchemeConfig(0.1, 1.0, rho=0.01), params)
    assert tr.terminated_by == "divergence"


def test_rejects_initial_state_outside_C(grid, params):
    with pytest.raises(ValueError):
        build_knots(GridFunction.constant(grid, -0.1), SchemeConfig(0.1, 1.0), params)


def test_converge_run_zero_data(grid, params):
    res = converge_run(GridFunction.zeros(grid), SchemeConfig(0.1, 0.5), params, 3)
    assert res.cauchy == [0.0, 0.0]
    with pytest.raises(ValueError):
        converge_run(GridFunction.zeros(grid), SchemeConfig(0.1, 0.5), params, 1)


def test_shifted_generator_run(params, x0, run_default):
    cfg, tr0 = run_default
    tr = run_scheme(x0, SchemeConfig(0.05, 1.0, gamma=0.7, seed=1), params)
    assert tr.terminated_by == "horizon"
    assert all(dist_to_C(k.y, 1.0) <= 1e-12 for k in tr.knots)
    from ageinvariance.oracles import sup_distance
    assert sup_distance(tr.samples, tr0.samples) < 1e-3


def test_two_species_run(grid):
    from ageinvariance.model import constant_on_support
    P = ModelParams(grid, 1.0, constant_on_support(grid, 1.5, 2.0), 0.5, 2.0, n=2)
    x0 = GridFunction(grid, np.tile(bump(grid, 0.025).values, (1, 2)))
    tr = run_scheme(x0, SchemeConfig(0.05, 1.0), P)
    assert tr.terminated_by == "horizon"
    assert max(tr.defects) <= 1e-12


def test_random_states_remain_in_C(params):
    rng = np.random.default_rng(7)
    for _ in range(3):
        y = sample_state_in_C(params, rng) * 0.05
        tr = run_scheme(y, SchemeConfig(0.1, 0.5), params)
        assert all(dist_to_C(k.y, 1.0) <= 1e-12 for k in tr.knots)
