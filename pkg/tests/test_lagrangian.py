import math

import numpy as np
import pytest

from bolza_reparam.errors import DomainEdge, ExpressionError, NotFound, UnknownName
from bolza_reparam.lagrangian import (BUILTINS, Structure, builtin, derive_condition_S_from_proximal,
                                      extract_linear_growth_from_G, model_from_descriptor, numeric_Q,
                                      radial_intercept, resolve_model)


def radial_slope_oracle(model, s, y, u):
    """Richardson-extrapolated central difference of r -> Lambda(s, y, r u) at r = 1.

    The step shrinks with the distance to the domain boundary, where Lambda may blow up.
    """
    room = float(model.dist_to_boundary(s, y, u)) / max(float(np.linalg.norm(u)), 1e-300)
    h = 1e-3 * min(1.0, room)
    f = lambda r: float(model.eval(s, y, r * u))
    d1 = (f(1 + h) - f(1 - h)) / (2 * h)
    d2 = (f(1 + h / 2) - f(1 - h / 2)) / h
    return (4 * d2 - d1) / 3


def _samples(model, rng, count=200):
    n = model.n or model.m
    out = []
    while len(out) < count:
        u = rng.normal(size=model.m) * rng.choice([0.1, 1.0, 10.0])
        s, y = float(rng.uniform(0, 1)), rng.normal(size=n)
        if model.uses_y and n == 2 and abs(y[0]) < 0.05:
            continue  # keep away from the surface where discont_surface jumps
        if all(np.isfinite(model.eval(s, y, r * u)) for r in (0.99, 1.0, 1.01)):
            out.append((s, y, u))
    return out


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_intercept_matches_lambda_minus_slope(name):
    model = builtin(name)
    rng = np.random.default_rng(11)
    for s, y, u in _samples(model, rng):
        lam = float(model.eval(s, y, u))
        want = lam - radial_slope_oracle(model, s, y, u)
        got = radial_intercept(model, s, y, u)
        assert got == pytest.approx(want, rel=1e-7, abs=1e-7 * (1 + abs(lam)))


def test_minimal_length_intercept_closed_form():
    m = builtin("minimal_length")
    for u in (0.0, 0.3, 2.0, 50.0):
        assert radial_intercept(m, 0.0, [0.0], [u]) == pytest.approx(1 / math.sqrt(1 + u * u), rel=1e-12)


def test_radial_concave_intercept_closed_form():
    m = builtin("radial_concave")
    for u in (0.5, 2.0, 1e9):
        assert radial_intercept(m, 0.0, [0.0], [u]) == pytest.approx(-1 / math.sqrt(1 + u * u), rel=1e-9)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_intercept_at_zero_is_lambda(name):
    m = builtin(name)
    y = np.zeros(m.n or m.m)
    lam = float(m.eval(0.3, y, np.zeros(m.m)))
    if math.isfinite(lam):
        assert radial_intercept(m, 0.3, y, np.zeros(m.m)) == pytest.approx(lam)


def test_numeric_slope():
    sq = model_from_descriptor({"expr": "u1**2"})
    assert numeric_Q(sq, 0.0, [0.0], [3.0], h=1e-6) == pytest.approx(18.0, abs=1e-4)
    ab = model_from_descriptor({"expr": "abs(u1)"})
    assert numeric_Q(ab, 0.0, [0.0], [2.0]) == pytest.approx(2.0, abs=1e-4)
    flat = model_from_descriptor({"expr": "1 + 0*u1"})
    assert numeric_Q(flat, 0.0, [0.0], [5.0]) == 0.0


def test_numeric_slope_domain_edge():
    edge = model_from_descriptor({"expr": "u1**2", "domain_expr": "u1 <= 1"})
    with pytest.raises(DomainEdge):
        numeric_Q(edge, 0.0, [0.0], [1.0])


def test_proximal_condition_constants():
    cs = derive_condition_S_from_proximal(1.0, 1.0)
    want = (math.e ** 2 + 1) * (math.e ** 2 - 1) / 2
    assert cs.kappa == pytest.approx(want, rel=1e-14)
    assert cs.kappa == pytest.approx(26.7991, abs=1e-4)
    assert cs.A == cs.kappa and cs.gamma_l1(1.0) == pytest.approx(want)
    zero = derive_condition_S_from_proximal(0.0, 3.0)
    assert zero.is_autonomous
    assert derive_condition_S_from_proximal(1e-8, 1.0).kappa == pytest.approx(0.0, abs=1e-7)


def test_linear_growth_from_G():
    sq = model_from_descriptor({"expr": "u1**2"})
    alpha, d = extract_linear_growth_from_G(sq)
    u = np.linspace(-1e3, 1e3, 20001)
    assert np.all(u ** 2 >= alpha * np.abs(u) - d)
    concave = model_from_descriptor({"expr": "unorm - sqrt(unorm)"})
    alpha, d = extract_linear_growth_from_G(concave)
    assert np.all(np.abs(u) - np.sqrt(np.abs(u)) >= alpha * np.abs(u) - d)
    with pytest.raises(NotFound):
        extract_linear_growth_from_G(builtin("minimal_length"), R_max=2.0 ** 10)


def test_builtin_linear_growth_on_samples():
    rng = np.random.default_rng(5)
    for name in BUILTINS:
        m = builtin(name)
        alpha, d = m.linear_growth
        n = m.n or m.m
        for _ in range(2000):
            u = rng.normal(size=m.m) * rng.choice([0.01, 1.0, 100.0])
            lam = float(m.eval(rng.uniform(0, 1), rng.normal(size=n), u))
            assert lam >= alpha * np.linalg.norm(u) - d - 1e-12


def test_catalog_facts():
    assert builtin("radial_concave").structure is Structure.PARTIALLY_DIFFERENTIABLE
    star = builtin("extended_star")
    assert star.in_domain(0.0, [0.0, 0.0], [0.9, 0.0])
    assert not star.in_domain(0.0, [0.0, 0.0], [1.1, 0.0])
    assert builtin("minimal_length").eval(0.0, [0.0], [3.0]) == pytest.approx(math.sqrt(10))
    assert builtin("minimal_length").linear_growth == (1.0, 0.0)


def test_discont_surface_jumps_across_surface():
    m = builtin("discont_surface")
    lo = float(m.eval(0.0, [-0.1, 0.0], [1.0, 0.0]))
    hi = float(m.eval(0.0, [0.1, 0.0], [1.0, 0.0]))
    assert hi == pytest.approx(2 * lo)


def test_resolve_model_forms():
    assert resolve_model("hnew_1d").name == "hnew_1d"
    assert resolve_model({"builtin": "discont_surface", "lam": 0.0}).name == "discont_surface"
    assert resolve_model({"expr": "u1**2 + y1**2", "name": "q"}).uses_y
    with pytest.raises(UnknownName):
        resolve_model("no_such_model")


def test_expression_whitelist():
    with pytest.raises(ExpressionError):
        model_from_descriptor({"expr": "__import__('os').system('true')"})
    with pytest.raises(ExpressionError):
        model_from_descriptor({"expr": "u1 +"})
