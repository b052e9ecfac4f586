"""JSON problem specifications.

A problem file looks like::

    {"model": "minimal_length", "T": 1, "t": 0, "x": [0],
     "g": {"type": "hard", "target": [1]},
     "b": [["1"]], "theta": 1}

``model`` accepts anything :func:`resolve_model` does.  ``b`` is an
``n x m`` matrix of expressions in ``y1..y4`` (omit for the identity) and
``g`` is ``hard``, ``quadratic`` or ``expr``.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import PreconditionViolated
from .expr import Expression
from .lagrangian import resolve_model
from .minimize import HardEndpoint, QuadraticEndpoint, ENDPOINT_TOL
from .trajectory import ProblemSpec

_KEYS = {"model", "T", "t", "x", "g", "b", "theta", "name", "substeps"}


class ExprEndpoint:
    def __init__(self, source: str):
        self.source = source
        self._expr = Expression(source)

    def __call__(self, y) -> float:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(self._expr(0.0, y, np.zeros(1)))

    def __repr__(self):
        return f"ExprEndpoint({self.source!r})"


class ExprDynamics:
    def __init__(self, rows):
        self.rows = [[str(e) for e in row] for row in rows]
        self._exprs = [[Expression(e) for e in row] for row in self.rows]

    def __call__(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = np.zeros(1)
        return np.array([[float(e(0.0, y, z)) for e in row] for row in self._exprs])

    def __repr__(self):
        return f"ExprDynamics({self.rows!r})"


def terminal_from_dict(spec) -> object:
    if spec is None:
        return None
    kind = spec.get("type")
    if kind == "hard":
        return HardEndpoint(tuple(float(v) for v in spec["target"]), float(spec.get("tol", ENDPOINT_TOL)))
    if kind == "quadratic":
        return QuadraticEndpoint(tuple(float(v) for v in spec["target"]), float(spec.get("weight", 1.0)))
    if kind == "expr":
        return ExprEndpoint(spec["expr"])
    raise PreconditionViolated("unknown terminal cost type", type=kind)


def problem_from_dict(data: dict) -> ProblemSpec:
    unknown = set(data) - _KEYS
    if unknown:
        raise PreconditionViolated("unknown problem keys", keys=sorted(unknown))
    model = resolve_model(data["model"])
    x = data.get("x")
    if x is None:
        x = [0.0] * (model.n or model.m)
    b = ExprDynamics(data["b"]) if data.get("b") is not None else None
    extra = {"substeps": int(data["substeps"])} if "substeps" in data else {}
    return ProblemSpec(
        T=float(data.get("T", 1.0)), t=float(data.get("t", 0.0)), x=x, lagrangian=model, b=b,
        theta=float(data.get("theta", 1.0)), g=terminal_from_dict(data.get("g")), name=str(data.get("name", "")),
        meta={"source": data}, **extra,
    )


def load_problem(path: str) -> ProblemSpec:
    with open(path, encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))


def terminal_to_dict(g) -> dict | None:
    if g is None:
        return None
    if isinstance(g, HardEndpoint):
        return {"type": "hard", "target": list(g.target), "tol": g.tol}
    if isinstance(g, QuadraticEndpoint):
        return {"type": "quadratic", "target": list(g.target), "weight": g.weight}
    if isinstance(g, ExprEndpoint):
        return {"type": "expr", "expr": g.source}
    return {"type": "callable", "repr": repr(g)}

