import json

import numpy as np
import pytest

from tubereach.geometry import (DirectionSet, VPolytope, box_polytope)
from tubereach.montecarlo import (simulate_reach_prob, validate_vertices,
                                  volume_ratio)
from tubereach.reachalgo import compute_reach_set
from tubereach.sysmodel import StochasticLTVSystem, viability_tube


def test_start_outside_initial_set_is_zero(sys1d, tube1d):
    p, s = simulate_reach_prob(sys1d, tube1d, np.array([1.5]),
                               np.zeros(5), 1000)
    assert p == 0.0 and s == 0.0


def test_near_deterministic_interior_start_is_one():
    sys = StochasticLTVSystem.lti(
        np.array([[1.0]]), np.array([[1.0]]),
        np.zeros(1), 1e-12 * np.eye(1),
        box_polytope(np.zeros(1), np.array([0.5])), 4)
    tube = viability_tube(1, 1.0, 4)
    p, s = simulate_reach_prob(sys, tube, np.zeros(1), np.zeros(4), 1000)
    assert p == 1.0 and s == 0.0


def test_seed_determinism(sys1d, tube1d):
    a = simulate_reach_prob(sys1d, tube1d, np.array([0.1]), np.zeros(5),
                            5000, seed=42)
    b = simulate_reach_prob(sys1d, tube1d, np.array([0.1]), np.zeros(5),
                            5000, seed=42)
    c = simulate_reach_prob(sys1d, tube1d, np.array([0.1]), np.zeros(5),
                            5000, seed=43)
    assert a == b
    assert a != c


def test_std_shrinks_with_sample_size(sys1d, tube1d):
    _, s1 = simulate_reach_prob(sys1d, tube1d, np.array([0.1]), np.zeros(5),
                                10_000, seed=0)
    _, s2 = simulate_reach_prob(sys1d, tube1d, np.array([0.1]), np.zeros(5),
                                40_000, seed=0)
    assert s2 == pytest.approx(s1 / 2, rel=0.2)


def test_small_sample_rejected(sys1d, tube1d):
    with pytest.raises(ValueError, match="n_traj"):
        simulate_reach_prob(sys1d, tube1d, np.zeros(1), np.zeros(5), 50)


@pytest.fixture(scope="module")
def reach06(sys1d, tube1d, pwa):
    dirs = DirectionSet(np.array([[1.0], [-1.0]]))
    return compute_reach_set(sys1d, tube1d, 0.6, dirs, pwa=pwa)


def test_validation_errors_nonnegative_within_noise(reach06, sys1d, tube1d):
    report = validate_vertices(reach06, sys1d, tube1d, 20_000, seed=1)
    assert len(report.records) >= 2
    for r in report.records:
        assert r.error >= -3 * max(r.binomial_std, 1e-3)
    assert report.mean_error >= -3 * report.pooled_binomial_std


def test_validation_rejects_empty_result(sys1d, tube1d, pwa):
    dirs = DirectionSet(np.array([[1.0], [-1.0]]))
    empty = compute_reach_set(sys1d, tube1d, 0.99, dirs, pwa=pwa)
    with pytest.raises(ValueError):
        validate_vertices(empty, sys1d, tube1d, 1000)


def test_validation_report_serialization(reach06, sys1d, tube1d, tmp_path):
    report = validate_vertices(reach06, sys1d, tube1d, 1000, seed=1)
    data = json.loads(report.to_json())
    assert data["alpha"] == 0.6
    assert len(data["records"]) == len(report.records)
    path = tmp_path / "validation.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("x0,")
    assert len(lines) == len(report.records) + 1


def square(half):
    return VPolytope(np.array([[-half, -half], [half, -half],
                               [half, half], [-half, half]]))


def test_volume_gap_zero_for_identical_sets():
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    ratio, std, violations = volume_ratio(square(1.0), square(1.0), box)
    assert ratio == 0.0
    assert violations == 0


def test_volume_gap_of_nested_squares():
    # outer [-1,1]^2, inner the left half: gap is half the box
    inner = VPolytope(np.array([[-1.0, -1.0], [0.0, -1.0],
                                [0.0, 1.0], [-1.0, 1.0]]))
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    ratio, std, violations = volume_ratio(inner, square(1.0), box,
                                          n_samples=40_000)
    assert ratio == pytest.approx(0.5, abs=3 * std + 1e-3)
    assert violations == 0


def test_volume_gap_flags_containment_violations():
    # "inner" sticks out of the outer set: violations must be reported
    big = square(1.0)
    small = square(0.5)
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    _, _, violations = volume_ratio(big, small, box)
    assert violations > 0
