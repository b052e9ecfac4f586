import math
from fractions import Fraction

import numpy as np
import pytest

from bolza_reparam.constants import make_context
from bolza_reparam.errors import CertificateRequired, InsufficientRoom, PreconditionViolated
from bolza_reparam.growth import check_H, check_M
from bolza_reparam.lagrangian import builtin
from bolza_reparam.reparam import (build_phi, compute_level_set_S, measure, mu0_delta, nice_pair, plan_reparam,
                                   reparametrize_pair, select_Sigma, subtract)
from bolza_reparam.trajectory import AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid, evaluate_cost

ML = builtin("minimal_length")
PROB = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=ML)
STEP = ControlSignal(TimeGrid([0.0, 1 / 3, 1.0]), [[3.0], [0.0]])


def test_level_set_worked_values():
    S, eps = compute_level_set_S(STEP, 2.0)
    assert S == ((0.0, 1 / 3),)
    assert eps == pytest.approx(1 / 6, abs=1e-15)
    assert compute_level_set_S(STEP, 3.0) == ((), 0.0)
    const = ControlSignal(TimeGrid([0.0, 1.0]), [[2.0]])
    assert compute_level_set_S(const, 1.0)[1] == 1.0


def test_midpoint_rules_against_rationals():
    x = Fraction(1, 2)  # c = 2 c_delta
    mu0 = (x + 1) / 2
    delta = (x / mu0 + 1) / 2
    got = mu0_delta(1.0, 2.0)
    assert got == pytest.approx((float(mu0), float(delta)), rel=1e-15)
    assert got[0] == 0.75


def test_sigma_leftmost_fill():
    S = ((0.0, 1 / 3),)
    Omega = ((0.0, 1.0),)
    assert select_Sigma(Omega, S, 1 / 6, 0.5) == ((1 / 3, 2 / 3),)
    assert select_Sigma(Omega, S, 0.0, 0.5) == ()
    room = subtract(Omega, S)
    assert select_Sigma(Omega, S, measure(room) * 0.5, 0.5) == room
    with pytest.raises(InsufficientRoom):
        select_Sigma(Omega, S, 1.0, 0.5)


def test_sigma_spans_several_pieces():
    Omega = ((0.0, 0.2), (0.3, 0.5), (0.6, 1.0))
    out = select_Sigma(Omega, (), 0.25, 0.5)
    assert out[:2] == ((0.0, 0.2), (0.3, 0.5)) and out[2][0] == 0.6
    assert measure(out) == pytest.approx(0.5)


def test_phi_worked_values():
    cov = build_phi(STEP.grid, ((0.0, 1 / 3),), ((1 / 3, 2 / 3),), 0.5, 2.0, STEP)
    assert cov.slopes.tolist() == [1.5, 0.5, 1.0]
    assert cov.phi(1 / 3) == pytest.approx(0.5, abs=1e-15)
    assert cov.phi(2 / 3) == pytest.approx(2 / 3, abs=1e-15)
    assert cov.phi(1.0) == 1.0 and cov.end_error <= 1e-12
    tau = np.linspace(0, 1, 1000)
    assert np.max(np.abs(cov.psi(cov.phi(tau)) - tau)) <= 1e-12


def test_phi_identity_without_level_sets():
    cov = build_phi(STEP.grid, (), (), 0.5, 5.0, STEP)
    assert np.array_equal(cov.image, cov.tau)


def test_reparametrized_control_worked_values():
    pair = AdmissiblePair.from_control(PROB, STEP)
    S, Sigma = ((0.0, 1 / 3),), ((1 / 3, 2 / 3),)
    cov = build_phi(STEP.grid, S, Sigma, 0.5, 2.0, STEP)
    out = reparametrize_pair(pair, cov, 2.0, 0.5, S, Sigma)
    s = np.linspace(0.01, 0.99, 99)
    idx = np.searchsorted(out.grid.nodes, s, side="right") - 1
    ubar = out.u.values[idx, 0]
    assert np.all(ubar[s < 0.5] == 2.0) and np.all(ubar[s > 0.5] == 0.0)
    assert out.u.sup_norm() == 2.0
    assert out.y.values[-1, 0] == pair.y.values[-1, 0]


def test_worked_example_costs():
    ctx = make_context(ML, T=1.0, B=2.0)
    pair = AdmissiblePair.from_control(PROB, STEP)
    _, rc = nice_pair(pair, ctx, check_H(ML, ctx), overrides={"nu": 2.0, "mu": 0.5, "Sigma": [(1 / 3, 2 / 3)]})
    assert abs(rc.cost_before - (math.sqrt(10) / 3 + 2 / 3)) <= 1e-6
    assert abs(rc.cost_after - (math.sqrt(5) / 2 + 0.5)) <= 1e-6
    assert rc.cov.end_error <= 1e-12
    assert set(rc.plan.forced) == {"mu", "nu"}


def test_bounded_pair_is_returned_unchanged():
    ctx = make_context(ML, T=1.0, B=3.0)
    u = ControlSignal(TimeGrid([0.0, 0.5, 1.0]), [[1.0], [-0.5]])
    pair = AdmissiblePair.from_control(PROB, u)
    out, rc = nice_pair(pair, ctx, check_H(ML, ctx))
    assert rc.eps_nu == 0.0
    assert np.array_equal(out.u.values, pair.u.values) and np.array_equal(out.grid.nodes, pair.grid.nodes)
    assert rc.cost_after == rc.cost_before


def test_certificate_is_internally_consistent():
    ctx = make_context(ML, T=1.0, B=3.0)
    u = ControlSignal(TimeGrid([0.0, 0.01, 1.0]), [[100.0], [0.5]])
    pair = AdmissiblePair.from_control(PROB, u)
    _, rc = nice_pair(pair, ctx, check_H(ML, ctx))
    gap = 2 * ctx.phi_B + rc.plan.Xi.value - rc.plan.Upsilon.value
    assert rc.cost_bound == pytest.approx(rc.cost_before + rc.eps_nu * gap, rel=1e-14)
    assert rc.cost_after <= rc.cost_bound + 1e-8 * (1 + rc.cost_before)
    assert rc.eps_nu <= ctx.R / rc.nu
    d = rc.to_dict()
    assert d["nu"] == rc.nu and d["cost_delta"] <= 0


def test_requires_a_certificate_that_holds():
    rc_model = builtin("radial_concave")
    ctx = make_context(rc_model, T=1.0, B=2.0)
    with pytest.raises(CertificateRequired):
        plan_reparam(rc_model, ctx, check_H(rc_model, ctx))


def test_cost_above_B_rejected():
    ctx = make_context(ML, T=1.0, B=1.2)
    pair = AdmissiblePair.from_control(PROB, STEP)
    with pytest.raises(PreconditionViolated):
        nice_pair(pair, ctx, check_H(ML, ctx))


def test_pair_hugging_the_boundary_breaks_the_cost_premise():
    m = builtin("hnew_1d")
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=m)
    ctx = make_context(m, T=1.0, B=2.0)
    # u close to -1 for most of the horizon: Lambda = 1/(1 - u^2) is large next to the boundary
    near = AdmissiblePair.from_control(prob, ControlSignal(TimeGrid([0.0, 0.9, 1.0]), [[-0.999], [0.0]]))
    assert evaluate_cost(near) > ctx.B
    with pytest.raises(PreconditionViolated):
        nice_pair(near, ctx, check_H(m, ctx))


def test_nu_grows_as_eta_shrinks():
    m = builtin("radial_concave")
    ctx = make_context(m, T=1.0, B=2.0)
    cert = check_M(m, ctx)
    nus = [plan_reparam(m, ctx, cert, eta).nu for eta in (0.4, 0.1, 0.025, 0.00625)]
    assert all(a <= b for a, b in zip(nus, nus[1:]))
    assert nus[-1] > nus[0]
    with pytest.raises(PreconditionViolated):
        plan_reparam(m, ctx, cert, 0.0)


def test_random_level_set_configurations():
    """phi(T) = T and |phi - id| <= 2 eps_nu over 1000 random configurations."""
    rng = np.random.default_rng(7)
    done = 0
    while done < 1000:
        n = int(rng.integers(1, 20))
        nodes = np.unique(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, n - 1)]))
        U = np.abs(rng.normal(size=(nodes.size - 1, 1))) * rng.choice([0.5, 3.0, 30.0])
        u = ControlSignal(TimeGrid(nodes), U)
        nu = float(rng.uniform(0.5, 10.0))
        mu = float(rng.uniform(0.1, 0.9))
        S, eps = compute_level_set_S(u, nu)
        try:
            Sigma = select_Sigma(((0.0, 1.0),), S, eps, mu)
        except InsufficientRoom:
            continue
        cov = build_phi(u.grid, S, Sigma, mu, nu, u)
        assert abs(cov.phi(1.0) - 1.0) <= 1e-12 and cov.end_error <= 1e-12
        assert cov.deviation <= 2 * eps + 1e-12
        R = u.l1_norm()
        assert eps <= R / nu + 1e-15
        done += 1


def test_rescaled_vector_control_respects_the_bound_exactly():
    # nu u / |u| rounds one ulp above nu for this vector
    U, nu = [6.32429127156266, 0.6580860843261219], 2.994419871578422
    assert np.linalg.norm(nu * np.array(U) / np.linalg.norm(U)) > nu
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.5, 0.0], lagrangian=builtin("discont_surface"))
    u = ControlSignal(TimeGrid([0.0, 0.1, 1.0]), [U, [0.0, 0.0]])
    pair = AdmissiblePair.from_control(prob, u)
    S, eps = compute_level_set_S(u, nu)
    Sigma = select_Sigma(((0.0, 1.0),), S, eps, 0.5)
    cov = build_phi(u.grid, S, Sigma, 0.5, nu, u)
    out = reparametrize_pair(pair, cov, nu, 0.5, S, Sigma)
    assert out.u.sup_norm() <= nu
