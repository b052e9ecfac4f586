import json
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from bolza_reparam.constants import compute_c_t_B
from bolza_reparam.errors import InsufficientRoom
from bolza_reparam.lagrangian import builtin
from bolza_reparam.reparam import build_phi, compute_level_set_S, measure, select_Sigma, subtract
from bolza_reparam.report import dumps
from bolza_reparam.trajectory import (AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid, evaluate_cost,
                                      pair_from_dict, pair_to_dict)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@st.composite
def step_controls(draw, max_cells=12):
    k = draw(st.integers(1, max_cells))
    cuts = draw(st.lists(st.floats(0.01, 0.99), min_size=k - 1, max_size=k - 1, unique=True))
    nodes = np.unique(np.concatenate([[0.0, 1.0], np.round(cuts, 6)]))
    vals = draw(st.lists(st.floats(-50, 50, allow_nan=False), min_size=nodes.size - 1, max_size=nodes.size - 1))
    return ControlSignal(TimeGrid(nodes), np.asarray(vals, dtype=float)[:, None])


@settings(max_examples=150, deadline=None)
@given(step_controls(), st.floats(0.5, 20.0), st.floats(0.1, 0.9))
def test_phi_is_an_increasing_bijection(u, nu, mu):
    S, eps = compute_level_set_S(u, nu)
    try:
        Sigma = select_Sigma(((0.0, 1.0),), S, eps, mu)
    except InsufficientRoom:
        return
    cov = build_phi(u.grid, S, Sigma, mu, nu, u)
    assert np.all(cov.slopes > 0)
    assert abs(cov.phi(1.0) - 1.0) <= 1e-12 and cov.phi(0.0) == 0.0
    assert np.all(np.diff(cov.image) > 0)
    assert cov.deviation <= 2 * eps + 1e-12
    tau = np.linspace(0.0, 1.0, 257)
    assert np.max(np.abs(cov.psi(cov.phi(tau)) - tau)) <= 1e-12


@settings(max_examples=150, deadline=None)
@given(step_controls(), st.floats(0.5, 20.0))
def test_level_set_excess(u, nu):
    S, eps = compute_level_set_S(u, nu)
    mags = np.abs(u.values[:, 0])
    big = mags > nu
    assert math.isclose(measure(S), float(np.sum(u.grid.lengths[big])), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(eps, float(np.sum(u.grid.lengths[big] * (mags[big] / nu - 1))), rel_tol=1e-12, abs_tol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=5), st.floats(0.0, 0.5), st.floats(0.1, 0.9))
def test_sigma_measure_and_disjointness(raw, eps, mu):
    S = tuple(sorted((min(a, b), max(a, b)) for a, b in raw if abs(a - b) > 1e-6))
    merged = []
    for a, b in S:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    S = tuple(merged)
    try:
        Sigma = select_Sigma(((0.0, 1.0),), S, eps, mu)
    except InsufficientRoom:
        assert measure(subtract(((0.0, 1.0),), S)) < eps / (1 - mu) * (1 - 1e-12) + 1e-12
        return
    assert math.isclose(measure(Sigma), eps / (1 - mu), rel_tol=1e-9, abs_tol=1e-12)
    for a, b in Sigma:
        for c, d in S:
            assert b <= c + 1e-15 or d <= a + 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 1e3), st.floats(0.01, 1e2), st.floats(0, 1e2), st.floats(0, 0.99))
def test_c_t_B_monotone(B, alpha, d, t):
    # increasing in B and in the elapsed time
    assert compute_c_t_B(t, 2 * B, alpha, d, 1.0) >= compute_c_t_B(t, B, alpha, d, 1.0)
    assert compute_c_t_B(0.0, B, alpha, d, 1.0) <= compute_c_t_B(t, B, alpha, d, 1.0) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.recursive(finite | st.integers(-10**6, 10**6) | st.text(max_size=5) | st.booleans() | st.none(),
                    lambda kids: st.lists(kids, max_size=4) | st.dictionaries(st.text(max_size=4), kids, max_size=4),
                    max_leaves=20))
def test_json_round_trip(obj):
    text = dumps(obj)
    assert json.loads(text) == obj
    assert dumps(json.loads(text)) == text


@settings(max_examples=60, deadline=None)
@given(step_controls(max_cells=6))
def test_pair_round_trip(u):
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=builtin("minimal_length"))
    pair = AdmissiblePair.from_control(prob, u)
    back = pair_from_dict(prob, json.loads(dumps(pair_to_dict(pair))))
    assert np.array_equal(back.u.values, pair.u.values)
    assert np.array_equal(back.y.values, pair.y.values)
    assert evaluate_cost(back) == evaluate_cost(pair)
