import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ageinvariance.lp_grid import (AgeGrid, GridAlignmentError, GridFunction, StatePair,
                                   cell_distance_to_K, chi, dist_to_C, in_C, lp_norm,
                                   project_to_C, shift_right, theta)

small = AgeGrid(0.5, 6, 2.0)
floats = st.floats(-3, 3, allow_nan=False)


def gf(values, grid=small):
    return GridFunction(grid, np.asarray(values, dtype=float))


# -- examples ------------------------------------------------------------------

def test_lp_norm_examples():
    assert lp_norm(GridFunction.zeros(small)) == 0.0
    assert lp_norm(gf([1, 1], AgeGrid(0.5, 2, 2.0))) == pytest.approx(1.0, abs=1e-15)
    assert lp_norm(gf([2, 3], AgeGrid(1.0, 2, 1.0))) == pytest.approx(5.0, abs=1e-15)


def test_lp_norm_uses_lp_inside_cells():
    g = AgeGrid(1.0, 1, 2.0)
    assert lp_norm(GridFunction(g, [[3.0, 4.0]])) == pytest.approx(5.0)


def test_theta_and_chi_examples():
    assert theta([0, 0, 0]) == 0
    assert theta([1, 2, 3]) == 6
    assert theta([-1, 1]) == 0
    assert chi(-0.5, 1.0) == 0
    assert chi(0.3, 1.0) == 0.3
    assert chi(5, 1.0) == 1


def test_shift_examples():
    g = AgeGrid(1.0, 3)
    f = gf([4, 5, 6], g)
    assert shift_right(f, 0).allclose(f, 0)
    np.testing.assert_array_equal(shift_right(f, 1).values[:, 0], [0, 4, 5])
    np.testing.assert_array_equal(shift_right(f, 5).values[:, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        shift_right(f, -1)


def test_dist_examples():
    assert dist_to_C(GridFunction.constant(small, 0.5), 1.0) == 0.0
    g = AgeGrid(1.0, 2, 1.0)
    assert dist_to_C(gf([1.5, -0.25], g), 1.0) == pytest.approx(0.75, abs=1e-15)
    assert dist_to_C(gf([1.0], AgeGrid(1.0, 1)), 1.0) == 0.0


def test_project_examples():
    g = AgeGrid(1.0, 3)
    f = gf([1.5, -0.25, 0.5], g)
    np.testing.assert_array_equal(project_to_C(f, 1.0).values[:, 0], [1, 0, 0.5])
    inside = gf([0.2, 0.0, 1.0], g)
    np.testing.assert_array_equal(project_to_C(inside, 1.0).values, inside.values)


def _brute_cell_min(v, kappa, p, n_grid=801):
    """Grid search for the nearest point of K = {w >= 0, sum w <= kappa} in R^2."""
    w = np.linspace(0, kappa, n_grid)
    W1, W2 = np.meshgrid(w, w)
    ok = W1 + W2 <= kappa + 1e-15
    d = (np.abs(W1 - v[0]) ** p + np.abs(W2 - v[1]) ** p) ** (1 / p)
    d[~ok] = np.inf
    i = np.unravel_index(np.argmin(d), d.shape)
    return d[i], np.array([W1[i], W2[i]])


def test_project_two_species_cap_example():
    g = AgeGrid(1.0, 1)
    f = GridFunction(g, [[0.8, 0.8]])
    P = project_to_C(f, 1.0)
    assert theta(P.values[0]) == pytest.approx(1.0, abs=1e-15)
    dmin, wmin = _brute_cell_min([0.8, 0.8], 1.0, 2.0)
    np.testing.assert_allclose(P.values[0], wmin, atol=2e-3)
    assert dist_to_C(f, 1.0) == pytest.approx(dmin, abs=2e-3)


@pytest.mark.parametrize("v", [(0.8, 0.8), (1.5, -0.3), (2.0, 0.1), (-1, -2), (0.3, 0.2),
                               (0.95, 0.2)])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_cell_distance_matches_brute_force(v, p):
    d = cell_distance_to_K(np.array([v]), 1.0, p)[0]
    dmin, _ = _brute_cell_min(v, 1.0, p)
    assert d == pytest.approx(dmin, abs=3e-3)
    assert d <= dmin + 1e-12


def test_grid_validation():
    with pytest.raises(ValueError):
        AgeGrid(0.0, 3)
    with pytest.raises(ValueError):
        AgeGrid(0.1, 0)
    with pytest.raises(ValueError):
        AgeGrid(0.1, 3, 0.5)
    with pytest.raises(GridAlignmentError):
        AgeGrid.from_horizon(1.005, 0.01)
    g = AgeGrid.from_horizon(10, 0.01)
    assert g.n_cells == 1000 and g.steps(0.3) == 30
    with pytest.raises(GridAlignmentError):
        g.steps(0.015)
    with pytest.raises(GridAlignmentError):
        g.steps(-0.01)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(5))


def test_values_are_read_only():
    f = gf(np.ones(6))
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_state_pair_norm_is_product_sum():
    g = AgeGrid(1.0, 2)
    v = StatePair([3.0], gf([1.0, 0.0], g))
    assert v.norm() == pytest.approx(4.0)
    with pytest.raises(ValueError):
        StatePair([1.0, 2.0], gf([1.0, 0.0], g))


# -- properties ----------------------------------------------------------------

vals6 = arrays(float, (6, 1), elements=floats)
vals6x2 = arrays(float, (6, 2), elements=floats)


@given(vals6, st.integers(0, 7), st.integers(0, 7))
def test_shift_semigroup_law(v, m1, m2):
    f = gf(v)
    np.testing.assert_array_equal(shift_right(shift_right(f, m1), m2).values,
                                  shift_right(f, m1 + m2).values)


@given(vals6, st.integers(0, 7))
def test_shift_contracts_norm(v, m):
    f = gf(v)
    s = shift_right(f, m)
    assert lp_norm(s) <= lp_norm(f) + 1e-15
    if not np.any(v[max(0, 6 - m):]):
        assert lp_norm(s) == pytest.approx(lp_norm(f))


@given(floats, st.floats(0.1, 5))
def test_chi_idempotent_and_bounded(s, kappa):
    c = chi(s, kappa)
    assert 0 <= c <= kappa
    assert chi(c, kappa) == c


@given(vals6, st.floats(-4, 4).filter(lambda a: a == 0 or abs(a) > 1e-100))
def test_norm_homogeneous(v, a):
    f = gf(v)
    assert lp_norm(f * a) == pytest.approx(abs(a) * lp_norm(f), rel=1e-12, abs=1e-300)


@given(st.one_of(vals6, vals6x2), st.floats(0.2, 3))
def test_projection_lands_in_C(v, kappa):
    f = gf(v)
    assert dist_to_C(project_to_C(f, kappa), kappa) == 0.0
    assert in_C(project_to_C(f, kappa), kappa)


@given(st.one_of(st.tuples(vals6, vals6), st.tuples(vals6x2, vals6x2)))
def test_dist_is_1_lipschitz(pair):
    f, g = gf(pair[0]), gf(pair[1])
    assert abs(dist_to_C(f, 1.0) - dist_to_C(g, 1.0)) <= lp_norm(f - g) + 1e-12


@given(vals6x2, st.sampled_from([1.0, 2.0, 3.0]))
def test_two_species_projection_quasi_optimal(v, p):
    g = AgeGrid(0.5, 6, p)
    f = GridFunction(g, v)
    assert lp_norm(project_to_C(f, 1.0) - f) <= 2 * dist_to_C(f, 1.0) + 1e-12


@given(vals6)
def test_scalar_projection_is_exact(v):
    f = gf(v)
    assert lp_norm(project_to_C(f, 1.0) - f) == pytest.approx(dist_to_C(f, 1.0), abs=1e-12)


def test_dist_zero_iff_in_C():
    for vals in itertools.product([-0.1, 0.0, 0.5, 1.0, 1.1], repeat=2):
        f = gf(np.array(vals * 3)[:, None])
        assert (dist_to_C(f, 1.0) == 0) == all(0 <= x <= 1 for x in vals)
