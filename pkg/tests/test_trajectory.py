import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from bolza_reparam.errors import InvalidPair, PreconditionViolated
from bolza_reparam.lagrangian import builtin
from bolza_reparam.trajectory import (AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid, check_measure_bound,
                                      evaluate_cost, integrate_state, pair_from_dict, pair_from_json, pair_to_csv,
                                      pair_to_dict)

ML = builtin("minimal_length")


def ml_problem(**kw):
    return ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=ML, **kw)


def step_pair(problem, nodes, values):
    return AdmissiblePair.from_control(problem, ControlSignal(TimeGrid(nodes), np.asarray(values, dtype=float)))


def test_time_grid_validation():
    with pytest.raises(Exception):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    g = TimeGrid.uniform(0.0, 1.0, 4)
    assert g.n_cells == 4 and np.allclose(g.lengths, 0.25)


def test_constant_speed_cost():
    pair = step_pair(ml_problem(), [0.0, 1.0], [[1.0]])
    assert evaluate_cost(pair) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert pair.y.values[-1, 0] == 1.0


def test_step_control_cost_against_quadrature():
    pair = step_pair(ml_problem(), [0.0, 1 / 3, 1.0], [[3.0], [0.0]])
    oracle, _ = quad(lambda s: math.sqrt(1 + (3.0 if s < 1 / 3 else 0.0) ** 2), 0, 1, points=[1 / 3])
    assert evaluate_cost(pair) == pytest.approx(oracle, abs=1e-9)
    assert evaluate_cost(pair) == pytest.approx(math.sqrt(10) / 3 + 2 / 3, abs=1e-12)


def test_cost_is_infinite_off_domain():
    star = builtin("extended_star")
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0, 0.0], lagrangian=star)
    pair = step_pair(prob, [0.0, 1.0], [[1.5, 0.0]])
    assert evaluate_cost(pair) == math.inf


def test_terminal_cost_added():
    pair = step_pair(ml_problem(g=lambda y: 2.0 * y[0]), [0.0, 1.0], [[1.0]])
    assert evaluate_cost(pair) == pytest.approx(math.sqrt(2) + 2.0)


def test_identity_dynamics_exact():
    pair = step_pair(ml_problem(), [0.0, 0.5, 1.0], [[2.0], [2.0]])
    assert np.array_equal(pair.y.values[:, 0], [0.0, 1.0, 2.0])


def test_zero_control_freezes_state():
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.7, -0.2], lagrangian=builtin("discont_surface"))
    pair = step_pair(prob, [0.0, 0.4, 1.0], np.zeros((2, 2)))
    assert np.all(pair.y.values == [[0.7, -0.2]] * 3)


def test_nonlinear_dynamics_against_exact_solution():
    prob = ml_problem(b=lambda y: np.array([[1.0 + abs(y[0])]]), substeps=64)
    grid = TimeGrid.uniform(0.0, 1.0, 8)
    y = integrate_state(prob, ControlSignal(grid, np.ones((8, 1))))
    assert np.max(np.abs(y.values[:, 0] - np.expm1(grid.nodes))) <= 1e-8


def test_nonlinear_dynamics_against_ode_solver():
    b = lambda y: np.array([[math.cos(y[0]), 0.5], [0.0, 1.0 + 0.1 * y[0]]])
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.1, 0.0], lagrangian=builtin("extended_star"), b=b, theta=2.0)
    u = np.array([[0.3, -0.2], [0.1, 0.4]])
    grid = TimeGrid([0.0, 0.5, 1.0])
    y = integrate_state(prob, ControlSignal(grid, u))
    state = np.array([0.1, 0.0])
    for k in range(2):
        sol = solve_ivp(lambda s, z: b(z) @ u[k], (grid.nodes[k], grid.nodes[k + 1]), state, rtol=1e-12, atol=1e-13)
        state = sol.y[:, -1]
        assert np.allclose(y.values[k + 1], state, atol=1e-9)


def test_build_rejects_inconsistent_state():
    prob = ml_problem()
    grid = TimeGrid([0.0, 1.0])
    good = step_pair(prob, [0.0, 1.0], [[1.0]])
    from bolza_reparam.trajectory import StateTrajectory
    bad_y = StateTrajectory(grid, np.array([[0.0], [0.5]]))
    with pytest.raises(InvalidPair):
        AdmissiblePair.build(prob, bad_y, good.u)
    with pytest.raises(InvalidPair):
        step_pair(ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=ML, control_cone=lambda v: v[0] >= 0),
                  [0.0, 1.0], [[-1.0]])


def test_measure_bound_worked_values():
    prob = ml_problem()
    pair = step_pair(prob, [0.0, 1 / 3, 1.0], [[3.0], [0.0]])
    res = check_measure_bound(pair, B=1.0, sigma=2.0)
    assert res.measure == pytest.approx(2 / 3) and res.bound == 0.5 and res.holds
    zero = step_pair(prob, [0.0, 1.0], [[0.0]])
    assert check_measure_bound(zero, B=1.0, sigma=5.0).measure == 1.0
    with pytest.raises(PreconditionViolated):
        check_measure_bound(pair, B=1.0, sigma=1.0)


def test_measure_bound_random_pairs():
    prob = ml_problem()
    rng = np.random.default_rng(2)
    B = 2.0
    seen = 0
    while seen < 100:
        nodes = np.unique(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 8)]))
        pair = step_pair(prob, nodes, rng.normal(size=(nodes.size - 1, 1)) * rng.uniform(0.1, 2.0))
        if evaluate_cost(pair) > B:
            continue
        for sigma in (2.5, 4.0, 10.0):
            assert check_measure_bound(pair, B, sigma).holds
        seen += 1


def test_json_and_csv_round_trip():
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.5, 0.0], lagrangian=builtin("discont_surface"))
    pair = step_pair(prob, [0.0, 0.25, 1.0], [[-1.0, 0.5], [0.2, 0.0]])
    back = pair_from_dict(prob, pair_to_dict(pair))
    assert np.array_equal(back.u.values, pair.u.values)
    assert np.array_equal(back.y.values, pair.y.values)
    import json
    again = pair_from_json(prob, json.dumps(pair_to_dict(pair)))
    assert evaluate_cost(again) == evaluate_cost(pair)
    assert pair_to_csv(pair).splitlines()[0].startswith("s,")
