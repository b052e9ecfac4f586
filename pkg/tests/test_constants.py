import math
from fractions import Fraction

import numpy as np
import pytest

from bolza_reparam.constants import (compute_c_t_B, compute_Phi_B, compute_uniform_B, estimate_Upsilon, estimate_Xi,
                                     gronwall_bound, l1_radius, make_context, min_lambda_near_boundary)
from bolza_reparam.errors import EmptySampleSet, PreconditionViolated, VariantInapplicable
from bolza_reparam.lagrangian import ConditionSData, builtin, model_from_descriptor
from bolza_reparam.trajectory import AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid, evaluate_cost


def c_oracle(t, B, alpha, d, T):
    t, B, alpha, d, T = map(Fraction, (t, B, alpha, d, T))
    return (B + d * (T - t)) / (alpha * (T - t))


@pytest.mark.parametrize("args", [(0.0, 2.0, 2.0, 0.0, 1.0), (0.5, 1.0, 1.0, 1.0, 1.0), (0.25, 3.0, 0.5, 2.0, 2.0)])
def test_c_t_B_matches_rational_arithmetic(args):
    assert compute_c_t_B(*args) == float(c_oracle(*args))


def test_c_t_B_known_values():
    assert compute_c_t_B(0.0, 2.0, 2.0, 0.0, 1.0) == 1.0
    assert compute_c_t_B(0.5, 1.0, 1.0, 1.0, 1.0) == 3.0
    assert compute_c_t_B(0.0, 0.0, 1.0, 0.0, 1.0) == 0.0


def test_c_t_B_rejects_bad_input():
    with pytest.raises(PreconditionViolated):
        compute_c_t_B(1.0, 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(PreconditionViolated):
        compute_c_t_B(0.0, 1.0, 0.0, 0.0, 1.0)


def test_phi_B_formula():
    cs = ConditionSData.constant(kappa=1.0, A=2.0, gamma=0.5)
    assert compute_Phi_B(cs, 3.0, 2.0, 1.0, 1.0) == pytest.approx(7.5, abs=1e-15)
    assert compute_Phi_B(ConditionSData.constant(kappa=1.0), 2.0, 1.0, 0.0, 1.0) == 2.0


def test_phi_B_piecewise_gamma():
    cs = ConditionSData(0.0, 0.0, (1.0, 3.0), (0.25,))
    assert compute_Phi_B(cs, 1.0, 1.0, 0.0, 1.0) == pytest.approx(0.25 + 3 * 0.75)


@pytest.mark.parametrize("name", ["minimal_length", "hnew_1d", "g_not_h", "radial_concave", "extended_star"])
@pytest.mark.parametrize("B", [0.5, 1.0, 7.0])
def test_phi_B_zero_for_autonomous(name, B):
    m = builtin(name)
    assert compute_Phi_B(m.condition_s, B, *m.linear_growth, 1.0) == 0.0


def test_gronwall_bound_value_and_trajectories():
    R = l1_radius(1.0, 1.0, 0.0, 1.0)
    K = gronwall_bound(R, 1.0, 1.0, 0.0, 0.0)
    assert R == 1.0
    assert K == pytest.approx(math.e, rel=1e-15)
    # b(y) = 1 + |y| grows linearly with theta = 1; every pair with cost <= 2 stays in the ball of
    # radius R e^R (R = 2), since minimal_length costs at least T
    K2 = gronwall_bound(2.0, 1.0, 1.0, 0.0, 0.0)
    assert K2 == pytest.approx(2 * math.e ** 2, rel=1e-15)
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=builtin("minimal_length"),
                       b=lambda y: np.array([[1.0 + abs(y[0])]]))
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 100:
        n = int(rng.integers(2, 12))
        nodes = np.unique(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, n - 1)]))
        u = rng.normal(size=(nodes.size - 1, 1)) * rng.uniform(0.1, 3.0)
        pair = AdmissiblePair.from_control(prob, ControlSignal(TimeGrid(nodes), u))
        if evaluate_cost(pair) > 2.0:
            continue
        assert pair.y.sup_norm() <= K2
        checked += 1


def test_gronwall_bound_monotone_in_B():
    ks = [gronwall_bound(l1_radius(B, 1.0, 0.5, 1.0), 1.0, 1.0, 0.3, 0.1) for B in (0.5, 1.0, 2.0, 4.0)]
    assert all(a < b for a, b in zip(ks, ks[1:]))


def test_frozen_state_bound():
    assert gronwall_bound(5.0, 0.0, 1.0, 2.0, 0.25) == 0.25


def test_make_context_fields():
    ctx = make_context(builtin("hnew_1d"), T=1.0, B=2.0)
    assert ctx.c_delta_B == 1.0
    assert ctx.phi_B == 0.0
    assert ctx.R == 1.0
    assert make_context(builtin("hnew_1d"), T=1.0, B=2.0, K=3.5).K == 3.5


@pytest.mark.parametrize("nu", [1.0, 2.0, 5.0, 10.0])
def test_xi_minimal_length(nu):
    est = estimate_Xi(builtin("minimal_length"), 1.0, nu)
    assert abs(est.value - 1 / math.sqrt(1 + nu * nu)) <= 1e-6


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_upsilon_minimal_length(c):
    est = estimate_Upsilon(builtin("minimal_length"), 1.0, c)
    assert abs(est.value - 1 / math.sqrt(1 + c * c)) <= 1e-6


def test_radial_concave_sup_and_inf():
    rc = builtin("radial_concave")
    assert -1e-3 <= estimate_Xi(rc, 1.0, 1.0).value <= 0.0
    for rho in (None, 0.5):
        assert estimate_Upsilon(rc, 1.0, 1.0, rho).value == pytest.approx(-1.0, abs=1e-9)


def test_g_not_h_inf_diverges():
    assert estimate_Upsilon(builtin("g_not_h"), 1.0, 1.0).value <= -1e3


def test_empty_sample_set():
    small = model_from_descriptor({"expr": "u1**2", "domain_expr": "abs(u1) < 1", "name": "small_domain"})
    with pytest.raises(EmptySampleSet):
        estimate_Xi(small, 1.0, 2.0)


def test_min_lambda_near_boundary_monotone_in_width():
    m = builtin("hnew_1d")
    vals = [min_lambda_near_boundary(m, 1.0, w) for w in (1.0, 0.25, 2.0 ** -6, 2.0 ** -12)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0]


def test_uniform_B_zero_control():
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=builtin("minimal_length"))
    assert compute_uniform_B(prob, "zero_control", delta_star=0.5) == pytest.approx(1.0)


def test_uniform_B_straight_line():
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=builtin("minimal_length"), g=lambda y: 0.0)
    B = compute_uniform_B(prob, "cv_convex_S", xi_star=[1.0])
    # the segment to xi* = 1 has speed 1 and cost sqrt(2); the bound covers it
    assert B >= math.sqrt(2) - 1e-12
    assert B <= math.sqrt(2) * 1.01


def test_uniform_B_variant_errors():
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=builtin("minimal_length"),
                       control_cone=lambda v: bool(np.all(np.asarray(v) > 0)))
    with pytest.raises(VariantInapplicable):
        compute_uniform_B(prob, "zero_control")
    with pytest.raises(VariantInapplicable):
        compute_uniform_B(prob, "no_such_variant")
