import numpy as np
import pytest

from tubereach.chance import (build_risk_lp, solve_anchor_cheby,
                              solve_anchor_xmax, solve_line_search)
from tubereach.geometry import HPolytope, box_polytope
from tubereach.montecarlo import simulate_reach_prob
from tubereach.sysmodel import (GaussianDisturbance, StochasticLTVSystem,
                                TargetTube, viability_tube)

# Frozen oracle from the 0.01-grid dynamic program on the scalar example
# (tests/conftest.py fixtures): V0 >= 0.6 on [-0.495, 0.495].
DP_06_LO, DP_06_HI = -0.495, 0.495
GRID = 0.01


def test_risk_variable_count_scalar_example(sys1d, tube1d, pwa):
    prob, lp = build_risk_lp(sys1d, tube1d, 0.8, pwa)
    # two half-spaces per step over five noisy steps
    assert prob.n_risk == 10
    assert len(prob.deterministic_rows) == 0
    # each stochastic row contributes one constraint per envelope piece
    assert lp.n_rows >= prob.n_risk * len(pwa.pieces)


def test_budget_floor_infeasible_diagnostic(sys1d, tube1d, pwa):
    res = solve_anchor_xmax(sys1d, tube1d, 1.0, pwa)
    assert res.status == "empty"
    assert "floor" in res.diagnostic


def test_zero_covariance_rows_deterministic(pwa):
    sys = StochasticLTVSystem.lti(
        np.array([[1.0]]), np.array([[1.0]]),
        np.zeros(1), np.zeros((1, 1)),
        box_polytope(np.zeros(1), np.array([0.5])), 3)
    tube = viability_tube(1, 1.0, 3)
    prob, _ = build_risk_lp(sys, tube, 0.9, pwa)
    assert prob.n_risk == 0
    assert len(prob.deterministic_rows) == 6
    res = solve_anchor_xmax(sys, tube, 0.9, pwa)
    assert res.feasible
    assert res.lower_bound == pytest.approx(1.0)


def test_xmax_anchor_on_scalar_example(sys1d, tube1d, pwa):
    res = solve_anchor_xmax(sys1d, tube1d, 0.6, pwa)
    assert res.feasible
    assert res.lower_bound >= 0.6
    assert tube1d[0].contains(res.x_anchor, tol=1e-7)
    # anchor sits inside the DP-certified region
    assert DP_06_LO - GRID <= res.x_anchor[0] <= DP_06_HI + GRID


def test_xmax_empty_certificate_when_budget_unreachable(sys1d, tube1d, pwa):
    # the final tube box is too tight for a 0.99 requirement
    res = solve_anchor_xmax(sys1d, tube1d, 0.99, pwa)
    assert res.status == "empty"
    assert res.x_anchor is None


def test_cheby_center_of_symmetric_box(pwa):
    sys = StochasticLTVSystem.lti(
        np.array([[1.0, 0.0], [0.0, 1.0]]), np.eye(2),
        np.zeros(2), 1e-6 * np.eye(2),
        box_polytope(np.zeros(2), np.ones(2)), 2)
    tube = viability_tube(2, 1.0, 2)
    res = solve_anchor_cheby(sys, tube, 0.6, pwa)
    assert res.feasible
    np.testing.assert_allclose(res.x_anchor, [0.0, 0.0], atol=1e-6)
    assert res.radius == pytest.approx(1.0, abs=1e-6)


def test_cheby_matches_right_triangle_incenter(pwa):
    # legs on the axes, hypotenuse x + y <= 1; incircle radius
    # r = (a + b - c) / 2 with a = b = 1, c = sqrt(2)
    tri = HPolytope(normals=np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]),
                    offsets=np.array([0.0, 0.0, 1.0]))
    big = box_polytope(np.zeros(2), 100.0 * np.ones(2))
    sys = StochasticLTVSystem.lti(
        np.zeros((2, 2)), np.eye(2), np.zeros(2), 1e-8 * np.eye(2),
        box_polytope(np.zeros(2), np.ones(2)), 1)
    tube = TargetTube([tri, big])
    res = solve_anchor_cheby(sys, tube, 0.6, pwa)
    r = (2.0 - np.sqrt(2.0)) / 2.0
    assert res.radius == pytest.approx(r, abs=1e-6)
    np.testing.assert_allclose(res.x_anchor, [r, r], atol=1e-6)


def test_cheby_scalar_example_dp_certified(sys1d, tube1d, pwa, dp1d):
    res = solve_anchor_cheby(sys1d, tube1d, 0.6, pwa)
    assert res.feasible and res.radius > 0
    grid = dp1d.grids[0]
    i = int(np.argmin(np.abs(grid - res.x_anchor[0])))
    assert dp1d.values[0][i] >= 0.6 - 0.02


def test_line_search_endpoints_certified(sys1d, tube1d, pwa, dp1d):
    anchor = solve_anchor_xmax(sys1d, tube1d, 0.6, pwa)
    grid = dp1d.grids[0]
    for d in (np.array([1.0]), np.array([-1.0])):
        ls = solve_line_search(sys1d, tube1d, 0.6, pwa, anchor.x_anchor, d)
        assert ls.status == "optimal"
        assert ls.theta_star > 0
        assert ls.lower_bound >= 0.6 - 1e-9
        x = anchor.x_anchor + ls.theta_star * d
        i = int(np.argmin(np.abs(grid - x[0])))
        assert dp1d.values[0][i] >= 0.6 - 0.02


def test_line_search_outside_anchor_rejected(sys1d, tube1d, pwa):
    ls = solve_line_search(sys1d, tube1d, 0.6, pwa, np.array([5.0]),
                           np.array([1.0]))
    assert ls.theta_star == 0.0
    assert ls.status == "infeasible"


def test_line_search_monotone_in_alpha(sys1d, pwa):
    tube = viability_tube(1, 1.0, 5)
    thetas = {}
    for alpha in (0.6, 0.9):
        anchor = solve_anchor_cheby(sys1d, tube, alpha, pwa)
        ls = solve_line_search(sys1d, tube, alpha, pwa,
                               np.zeros(1), np.array([1.0]))
        thetas[alpha] = ls.theta_star
    assert thetas[0.9] <= thetas[0.6] + 1e-9


def test_budget_consistency(sys1d, tube1d, pwa):
    prob, lp = build_risk_lp(sys1d, tube1d, 0.6, pwa)
    from tubereach.lpsolve import solve_lp
    sol = solve_lp(lp)
    _, deltas, _ = prob.split(sol.z)
    assert deltas.sum() <= (1.0 - 0.6) + 1e-9
    assert np.all(deltas >= prob.delta_lb - 1e-12)


def test_near_deterministic_matches_robust_answer(pwa):
    # with vanishing noise the line search converges to the noise-free
    # reachability answer: from 0 the state can stay in [-1,1] iff
    # |x0| <= 1, so theta* ~ 1 along +1
    sys = StochasticLTVSystem.lti(
        np.array([[1.0]]), np.array([[1.0]]),
        np.zeros(1), 1e-12 * np.eye(1),
        box_polytope(np.zeros(1), np.array([0.1])), 5)
    tube = viability_tube(1, 1.0, 5)
    ls = solve_line_search(sys, tube, 0.8, pwa, np.zeros(1), np.array([1.0]))
    assert ls.theta_star == pytest.approx(1.0, abs=1e-6)


def test_conservatism_against_monte_carlo(sys1d, tube1d, pwa):
    # the certified lower bound never exceeds the empirical probability
    # beyond sampling error
    anchor = solve_anchor_xmax(sys1d, tube1d, 0.6, pwa)
    ls = solve_line_search(sys1d, tube1d, 0.6, pwa, anchor.x_anchor,
                           np.array([1.0]))
    x = anchor.x_anchor + ls.theta_star * np.array([1.0])
    p, s = simulate_reach_prob(sys1d, tube1d, x, ls.U_star, 100_000, seed=0)
    assert p >= ls.lower_bound - 3 * s


def test_build_modes_validation(sys1d, tube1d, pwa):
    with pytest.raises(ValueError):
        build_risk_lp(sys1d, tube1d, 0.6, pwa, x0_mode="line")
    with pytest.raises(ValueError):
        build_risk_lp(sys1d, tube1d, 0.6, pwa, x0_mode="fixed")
    with pytest.raises(ValueError):
        build_risk_lp(sys1d, tube1d, 1.2, pwa)
    with pytest.raises(ValueError):
        build_risk_lp(sys1d, tube1d, 0.6, pwa, x0_mode="bogus")
