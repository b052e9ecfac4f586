import math

import pytest

from bolza_reparam.constants import make_context
from bolza_reparam.growth import (Verdict, check_G, check_H, check_M, check_superlinearity,
                                  cross_check_implications, h_margin)
from bolza_reparam.lagrangian import builtin, model_from_descriptor


def ctx_for(model, B=1.0, **kw):
    return make_context(model, T=1.0, B=B, x_star=[0.0] * (model.n or model.m), **kw)


def test_minimal_length_verdicts():
    m = builtin("minimal_length")
    ctx = ctx_for(m)
    assert check_G(m, ctx.K).verdict is Verdict.FAILS
    assert check_H(m, ctx).verdict is Verdict.HOLDS
    assert check_superlinearity(m, ctx.K).verdict is not Verdict.HOLDS


def test_g_not_h_verdicts():
    m = builtin("g_not_h")
    ctx = ctx_for(m)
    assert check_G(m, ctx.K).verdict is Verdict.HOLDS
    assert check_H(m, ctx).verdict is Verdict.FAILS
    assert check_M(m, ctx).verdict is not Verdict.HOLDS


def test_hnew_needs_the_distance_filter():
    m = builtin("hnew_1d")
    ctx = ctx_for(m, B=2.0, delta=0.5)
    cert = check_H(m, ctx)
    assert cert.verdict is Verdict.HOLDS
    w = cert.witnesses
    assert w.rhos and min(w.rhos) > 0
    # without the filter the same (c, nu_bar) has a negative margin
    assert h_margin(m, ctx, w.c, w.nu_bar, rhos=w.rhos) > 0
    assert h_margin(m, ctx, w.c, w.nu_bar, rhos=(None,)) < 0


def test_radial_concave_verdicts():
    m = builtin("radial_concave")
    ctx = ctx_for(m)
    assert check_H(m, ctx).verdict is Verdict.FAILS
    cert = check_M(m, ctx)
    assert cert.verdict is Verdict.HOLDS
    assert cert.witnesses.Upsilon_at_rho == pytest.approx(-1.0, abs=1e-9)


def test_g_holds_for_bounded_weight_on_concave_growth():
    m = model_from_descriptor({"expr": "(8 + sin(s)) * (unorm - sqrt(unorm))", "name": "weighted_concave"})
    assert check_G(m, 1.0).verdict is Verdict.HOLDS


def test_g_with_unit_weight_on_longer_ladder():
    m = model_from_descriptor({"expr": "unorm - sqrt(unorm)", "name": "concave"})
    ladder = [2.0 ** k for k in range(0, 21)]
    assert check_G(m, 1.0, ladder=ladder).verdict is Verdict.HOLDS


def test_superlinear_quadratic():
    assert check_superlinearity(model_from_descriptor({"expr": "u1**2"})).verdict is Verdict.HOLDS


def test_m_fails_on_sqrt_growth():
    m = model_from_descriptor({"expr": "sqrt(unorm)", "name": "sqrt"})
    cert = check_M(m, ctx_for(m))
    assert cert.verdict is Verdict.FAILS
    assert "(ii)" in cert.notes


def test_m_fails_on_slope_family():
    # beta |u|^2 - 1 on the line u2 = beta u1, 0 on the vertical axis
    m = model_from_descriptor({"expr": "piecewise(u1 == 0, 0, (u2 / u1) * (u1**2 + u2**2) - 1)", "name": "slopes",
                               "structure": "PartiallyDifferentiable"})
    cert = check_M(m, ctx_for(m))
    assert cert.verdict is Verdict.FAILS
    assert "(i)" in cert.notes


@pytest.mark.parametrize("name", ["minimal_length", "hnew_1d"])
def test_h_monotone_in_B(name):
    m = builtin(name)
    for B in (8.0, 4.0, 2.0):
        if check_H(m, ctx_for(m, B=B)).holds:
            assert check_H(m, ctx_for(m, B=B / 2)).holds


def test_certificate_serializes():
    m = builtin("minimal_length")
    d = check_H(m, ctx_for(m)).to_dict()
    assert d["verdict"] == "Holds" and d["witnesses"]["margin"] > 0
    assert math.isfinite(d["context"]["K"])


def test_implications_consistent_on_cheap_builtins():
    rep = cross_check_implications(["minimal_length", "hnew_1d", "g_not_h", "radial_concave"])
    assert rep.violations == []
    assert rep.verdicts["g_not_h"]["G"] == "Holds"
