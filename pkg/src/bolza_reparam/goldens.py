"""Golden-value suite: closed-form constants, sampled sup/inf against exact values, the reparametrization example."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .constants import compute_c_t_B, compute_Phi_B, estimate_Upsilon, estimate_Xi, make_context
from .growth import check_H
from .lagrangian import builtin
from .reparam import nice_pair
from .trajectory import AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid

AUTONOMOUS = ("minimal_length", "hnew_1d", "g_not_h", "radial_concave", "extended_star")


@dataclass(frozen=True)
class GoldenResult:
    name: str
    value: float
    expected: str
    passed: bool
    seconds: float

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "expected": self.expected, "passed": self.passed,
                "seconds": self.seconds}


def _near(target: float, tol: float) -> tuple:
    return (lambda v: abs(v - target) <= tol), f"{target:.12g} +/- {tol:g}"


def _within(lo: float, hi: float) -> tuple:
    return (lambda v: lo <= v <= hi), f"[{lo:g}, {hi:g}]"


def _worked_example() -> tuple:
    model = builtin("minimal_length")
    prob = ProblemSpec(T=1.0, t=0.0, x=[0.0], lagrangian=model)
    pair = AdmissiblePair.from_control(prob, ControlSignal(TimeGrid([0.0, 1 / 3, 1.0]), [[3.0], [0.0]]))
    ctx = make_context(model, T=1.0, B=2.0)
    cert = check_H(model, ctx)
    _, rc = nice_pair(pair, ctx, cert, overrides={"nu": 2.0, "mu": 0.5, "Sigma": [(1 / 3, 2 / 3)]})
    return rc


def golden_checks() -> list:
    """(name, thunk, predicate, expected text) for every golden."""
    checks = []

    def add(name: str, thunk: Callable[[], float], spec: tuple):
        checks.append((name, thunk, spec[0], spec[1]))

    add("c_0(2), alpha=2, d=0, T=1", lambda: compute_c_t_B(0.0, 2.0, 2.0, 0.0, 1.0), _near(1.0, 0.0))
    for name in AUTONOMOUS:
        m = builtin(name)
        add(f"Phi(1) {name}", lambda m=m: compute_Phi_B(m.condition_s, 1.0, *m.linear_growth, 1.0), _near(0.0, 0.0))
    ml = builtin("minimal_length")
    for nu in (1.0, 2.0, 5.0, 10.0):
        add(f"Xi({nu:g}) minimal_length", lambda nu=nu: estimate_Xi(ml, 1.0, nu).value,
            _near(1 / math.sqrt(1 + nu * nu), 1e-6))
    for c in (0.5, 1.0, 2.0):
        add(f"Upsilon({c:g}) minimal_length", lambda c=c: estimate_Upsilon(ml, 1.0, c).value,
            _near(1 / math.sqrt(1 + c * c), 1e-6))
    rc = builtin("radial_concave")
    add("Xi(1) radial_concave", lambda: estimate_Xi(rc, 1.0, 1.0).value, _within(-1e-3, 0.0))
    add("Upsilon(1) radial_concave", lambda: estimate_Upsilon(rc, 1.0, 1.0).value, _near(-1.0, 1e-9))

    cache: dict = {}

    def example(field: str) -> float:
        if "rc" not in cache:
            cache["rc"] = _worked_example()
        r = cache["rc"]
        return {"before": r.cost_before, "after": r.cost_after, "end": r.cov.end_error}[field]

    add("worked example cost before", lambda: example("before"), _near(math.sqrt(10) / 3 + 2 / 3, 1e-6))
    add("worked example cost after", lambda: example("after"), _near(math.sqrt(5) / 2 + 0.5, 1e-6))
    add("worked example |phi(T) - T|", lambda: example("end"), _within(0.0, 1e-12))
    return checks


def run_goldens(only: Optional[str] = None) -> list:
    out = []
    for name, thunk, pred, expected in golden_checks():
        if only and only not in name:
            continue
        t0 = time.perf_counter()
        try:
            value = float(thunk())
            ok = bool(pred(value))
        except Exception as exc:  # a golden that raises is a failure, reported with the error
            value, ok, expected = math.nan, False, f"{expected} (raised {type(exc).__name__}: {exc})"
        out.append(GoldenResult(name, value, expected, ok, time.perf_counter() - t0))
    return out


def format_table(results: list) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'value':>24}  result  expected"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:>24.17g}  {'PASS' if r.passed else 'FAIL'}    {r.expected}")
    return "\n".join(lines)
