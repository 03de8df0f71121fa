import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from oracles import rho_loops, truth_loops
from stlplan.bench import TASK_FORMULAS, four_zone_world
from stlplan.geometry import Circle, Rect, Scenario, Trajectory
from stlplan.monitor import (
    HorizonError,
    SmoothParams,
    aggregation_profile,
    atom_signals,
    boolean_satisfaction,
    evaluate,
    exact_robustness,
    finite_difference_grad,
    robustness_at,
    robustness_from_signals,
    robustness_signal,
    satisfied_from_signals,
    smooth_max,
    smooth_min,
    smooth_robustness,
    smooth_robustness_grad,
    smoothing_error_bound,
)
from stlplan.nominal import greedy_nominal
from stlplan.stl import Not, parse


def sig(f_text, mu, k=None, t=0):
    return robustness_from_signals(parse(f_text), {"A": np.asarray(mu, float)}, t, k)


def test_always_and_eventually_over_values():
    assert sig("G[0,2](in(A))", [3, 1, 2]) == 1.0
    assert sig("F[0,2](in(A))", [3, 1, 2]) == 3.0


def test_until_nested_min_max():
    f = parse("U[0,2](in(A), in(B))")
    mu = {"A": [5.0, 5.0, -1.0], "B": [-1.0, 2.0, 9.0]}
    expected = rho_loops(f, mu, 0)
    assert expected == 5.0
    assert robustness_from_signals(f, {k: np.array(v) for k, v in mu.items()}, 0) == expected


def test_until_with_positive_lower_bound():
    f = parse("U[2,3](in(A), in(B))")
    mu = {"A": [1.0, -2.0, 4.0, 3.0], "B": [7.0, 7.0, 0.5, 6.0]}
    got = robustness_from_signals(f, {k: np.array(v) for k, v in mu.items()}, 0)
    assert got == rho_loops(f, mu, 0) == -2.0


def test_contradiction_never_satisfied(rng):
    scen = Scenario(Rect(0, 0, 10, 10), {"A": Circle(5, 5, 2)}, (), (1, 1, 0), 3, "in(A)")
    f = parse("in(A) & !in(A)")
    for _ in range(20):
        traj = Trajectory(np.column_stack([rng.uniform(0, 10, size=(4, 2)), np.zeros(4)]))
        mu = scen.regions["A"].signed_distance(traj.xy[0])
        assert exact_robustness(f, traj, scen) == -abs(mu)
        assert not boolean_satisfaction(f, traj, scen)


def test_horizon_error_names_node():
    f = parse("in(A) & F[2,9](in(A))")
    with pytest.raises(HorizonError) as exc:
        robustness_from_signals(f, {"A": np.zeros(5)}, 0)
    assert exc.value.node == parse("F[2,9](in(A))")


def test_horizon_error_outermost_under_nesting():
    f = parse("G[0,3](F[0,3](in(A)))")
    with pytest.raises(HorizonError) as exc:
        robustness_from_signals(f, {"A": np.zeros(5)}, 0)
    assert exc.value.node == parse("F[0,3](in(A))")
    with pytest.raises(HorizonError) as exc:
        robustness_from_signals(f, {"A": np.zeros(3)}, 0)
    assert exc.value.node == f


def test_smooth_max_analytic():
    assert smooth_max([0.0, 0.0], 1.0) == pytest.approx(math.log(2), abs=1e-15)


def test_smooth_max_stable_at_large_k():
    v = smooth_max([1000.0, 999.0], 10000.0)
    assert np.isfinite(v) and v == pytest.approx(1000.0, abs=1e-12)


def test_smooth_always_bound():
    v = sig("G[0,2](in(A))", [3, 1, 2], k=300.0)
    assert 1 - math.log(3) / 300 <= v <= 1


def test_smooth_error_decreasing_on_phi_d():
    scen = four_zone_world(TASK_FORMULAS["phi_d"])
    traj = greedy_nominal(scen)
    f = scen.formula
    exact = exact_robustness(f, traj, scen)
    errs = [abs(smooth_robustness(f, traj, scen, 0, SmoothParams(k)) - exact) for k in (10.0, 100.0, 1000.0)]
    assert errs[0] > errs[1] > errs[2]


def test_smooth_params_validation():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            SmoothParams(bad)


def test_gradient_circle_example():
    scen = Scenario(Rect(-5, -5, 5, 5), {"A": Circle(0, 0, 2)}, (), (1, 0, 0), 1, "F[0,0](in(A))")
    traj = Trajectory(np.array([[1.0, 0.0, 0.3], [3.0, 3.0, 0.0]]))
    g = smooth_robustness_grad(scen.formula, traj, scen, 0, SmoothParams(300.0))
    assert np.allclose(g[0], [-1.0, 0.0, 0.0], atol=1e-15)
    assert np.all(g[1] == 0.0)


def test_gradient_dead_timesteps_zero(rng):
    scen = Scenario(Rect(0, 0, 10, 10), {"A": Circle(5, 5, 2), "B": Rect(1, 1, 3, 3)}, (), (5, 5, 0), 12,
                    "F[2,4](in(A)) & G[8,9](in(B))")
    traj = Trajectory(np.column_stack([rng.uniform(0, 10, size=(13, 2)), np.zeros(13)]))
    g = smooth_robustness_grad(scen.formula, traj, scen, 0, SmoothParams(5.0))
    dead = [0, 1, 5, 6, 7, 10, 11, 12]
    assert np.all(g[dead] == 0.0)
    assert np.all(g[:, 2] == 0.0)
    assert np.any(g[[2, 3, 4, 8, 9]] != 0.0)


def _box_scenario(T):
    return Scenario(Rect(0, 0, 10, 10), {"A": Rect(4, 4, 6, 6)}, (), (0, 0, 0), T, "in(A)")


def test_boolean_examples():
    scen = _box_scenario(2)
    inside = Trajectory(np.array([[5, 5, 0], [4.5, 5, 0], [5, 5.5, 0]], float))
    outside = Trajectory(np.array([[1, 1, 0], [2, 2, 0], [9, 9, 0]], float))
    assert boolean_satisfaction(parse("G[0,2](in(A))"), inside, scen)
    assert not boolean_satisfaction(parse("F[0,2](in(A))"), outside, scen)
    assert evaluate(parse("G[0,2](in(A))"), inside, scen).satisfied


def test_satisfied_from_signals_until():
    f = parse("U[1,3](in(A), in(B))")
    truth = {"A": np.array([True, True, False, True]), "B": np.array([False, False, True, False])}
    assert satisfied_from_signals(f, truth, 0) == truth_loops(f, truth, 0) is True
    truth["A"][1] = False
    assert satisfied_from_signals(f, truth, 0) == truth_loops(f, truth, 0) is False


@given(st.integers(0, 2**32 - 1))
def test_exact_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    f, traj, scen = random_instance(rng, int(rng.integers(1, 12)))
    mu = {n: list(v) for n, v in atom_signals(f, traj, scen)[0].items()}
    assert exact_robustness(f, traj, scen) == rho_loops(f, mu, 0)


@given(st.integers(0, 2**32 - 1))
def test_smooth_matches_loop_oracle_without_until(seed):
    rng = np.random.default_rng(seed)
    f, traj, scen = random_instance(rng, int(rng.integers(1, 12)), allow_until=False)
    mu = {n: list(v) for n, v in atom_signals(f, traj, scen)[0].items()}
    got = smooth_robustness(f, traj, scen, 0, SmoothParams(7.0))
    assert got == pytest.approx(rho_loops(f, mu, 0, 7.0), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_negation_duality(seed):
    rng = np.random.default_rng(seed)
    f, traj, scen = random_instance(rng, int(rng.integers(1, 12)))
    assert exact_robustness(Not(f), traj, scen) == -exact_robustness(f, traj, scen)
    sp = SmoothParams(3.0)
    assert smooth_robustness(Not(f), traj, scen, 0, sp) == -smooth_robustness(f, traj, scen, 0, sp)


@given(st.integers(0, 2**32 - 1))
def test_soundness_property(seed):
    rng = np.random.default_rng(seed)
    f, traj, scen = random_instance(rng, int(rng.integers(1, 12)))
    rho = exact_robustness(f, traj, scen)
    if abs(rho) >= 1e-9:
        assert boolean_satisfaction(f, traj, scen) == (rho > 0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 10.0, 300.0]))
def test_batched_point_evaluator_matches_signal(seed, k):
    rng = np.random.default_rng(seed)
    f, traj, scen = random_instance(rng, int(rng.integers(1, 12)))
    signals, _ = atom_signals(f, traj, scen)
    batch = {n: np.stack([v, v[::-1]]) for n, v in signals.items()}
    for kk in (None, k):
        got = robustness_at(f, batch, 0, kk)
        assert got[0] == robustness_signal(f, signals, kk)[0][0]
        assert got[1] == robustness_signal(f, {n: v[::-1] for n, v in signals.items()}, kk)[0][0]


def test_aggregation_profile():
    assert aggregation_profile(parse("in(A)")) == (0, 1)
    assert aggregation_profile(parse("F[2,6](in(A) | in(B) | in(C)) & in(A)")) == (3, 5)
    assert aggregation_profile(parse("U[1,4](in(A), in(B))")) == (3, 4)
    assert smoothing_error_bound(parse("in(A)"), 1.0) == 0.0


def test_smooth_min_is_antisymmetric():
    x = np.array([0.3, -1.2, 2.0])
    assert smooth_min(x, 4.0) == -smooth_max(-x, 4.0)


def test_gradient_matches_extrapolated_differences():
    # circles only, points kept off the centres, so the signed distance is smooth everywhere used
    rng = np.random.default_rng(8)
    sp = SmoothParams(300.0)
    worst = 0.0
    for _ in range(20):
        regions = {n: Circle(float(rng.uniform(2, 8)), float(rng.uniform(2, 8)), 1.5) for n in "ABC"}
        scen = Scenario(Rect(0, 0, 10, 10), regions, (), (5, 5, 0), 6, "F[0,3](in(A)) & G[1,4](!in(B)) | U[0,3](in(C), in(A))")
        xy = rng.uniform(0, 10, size=(7, 2))
        if min(np.hypot(*(xy - c.centroid).T).min() for c in regions.values()) < 0.1:
            continue
        traj = Trajectory(np.column_stack([xy, np.zeros(7)]))
        g = smooth_robustness_grad(scen.formula, traj, scen, 0, sp)
        h = 1e-5
        ref = (4 * finite_difference_grad(scen.formula, traj, scen, 0, sp, h)
               - finite_difference_grad(scen.formula, traj, scen, 0, sp, 2 * h)) / 3
        worst = max(worst, float(np.max(np.abs(g - ref))))
    assert worst < 1e-7
