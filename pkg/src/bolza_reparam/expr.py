"""A small expression language for user-defined Lagrangians.

Expressions are parsed with :mod:`ast` and compiled to vectorized numpy
callables ``f(s, y, u)``.  Only a whitelist of syntax is accepted:

* numbers, ``pi``, ``inf``
* variables ``s``, ``y1``..``y4``, ``u1``..``u4``, ``ynorm`` (=|y|), ``unorm`` (=|u|)
* ``+ - * / **``, unary minus, comparisons (chains allowed), ``and``, ``or``, ``not``
* ``abs``, ``sqrt``, ``exp``, ``log``, ``sin``, ``cos``, ``tan``, ``atan2``,
  ``min``, ``max`` (any number of arguments)
* ``piecewise(cond1, val1, cond2, val2, ..., default)`` and ``where(cond, a, b)``

Example: ``piecewise(u1 <= -1, inf, u1 <= 0, 1/(1-u1**2), u1**2 + 1)``.
"""

from __future__ import annotations

import ast
import re

import numpy as np

from .errors import ExpressionError

MAX_DIM = 4

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}

_FUNCS = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "atan2": np.arctan2,
}

_CONSTS = {"pi": np.pi, "inf": np.inf}

_VAR = re.compile(r"^([yu])([1-9])$")


class Expression:
    """Compiled expression; call with broadcastable ``s``, ``y`` (..., n), ``u`` (..., m)."""

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression: {exc.msg}", source=source) from None
        self.names: set[str] = set()
        self._fn = self._compile(tree.body)

    @property
    def uses_s(self) -> bool:
        return "s" in self.names

    @property
    def uses_y(self) -> bool:
        return any(n.startswith("y") for n in self.names)

    def max_index(self, letter: str) -> int:
        idx = [int(n[1:]) for n in self.names if _VAR.match(n) and n[0] == letter]
        return max(idx, default=0)

    def __call__(self, s, y, u):
        env = {"s": s, "y": y, "u": u}
        with np.errstate(all="ignore"):
            out = self._fn(env)
        s_, y_, u_ = np.asarray(s), np.asarray(y), np.asarray(u)
        shape = np.broadcast_shapes(s_.shape, y_.shape[:-1], u_.shape[:-1])
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    # -- compilation ---------------------------------------------------------

    def _compile(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError("only numeric constants are allowed", source=self.source)
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            return self._name(node.id)
        if isinstance(node, ast.BinOp):
            op = _BINOPS.get(type(node.op))
            if op is None:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed", source=self.source)
            a, b = self._compile(node.left), self._compile(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp):
            a = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda env: np.negative(a(env))
            if isinstance(node.op, ast.UAdd):
                return a
            if isinstance(node.op, ast.Not):
                return lambda env: np.logical_not(a(env))
            raise ExpressionError("unary operator not allowed", source=self.source)
        if isinstance(node, ast.BoolOp):
            parts = [self._compile(v) for v in node.values]
            join = np.logical_and if isinstance(node.op, ast.And) else np.logical_or

            def boolop(env):
                acc = parts[0](env)
                for p in parts[1:]:
                    acc = join(acc, p(env))
                return acc

            return boolop
        if isinstance(node, ast.Compare):
            first = self._compile(node.left)
            rest = [(_CMPOPS[type(op)], self._compile(c)) for op, c in zip(node.ops, node.comparators)
                    if type(op) in _CMPOPS]
            if len(rest) != len(node.ops):
                raise ExpressionError("comparison operator not allowed", source=self.source)

            def compare(env):
                left = first(env)
                acc = True
                for op, right_fn in rest:
                    right = right_fn(env)
                    acc = np.logical_and(acc, op(left, right))
                    left = right
                return acc

            return compare
        if isinstance(node, ast.Call):
            return self._call(node)
        raise ExpressionError(f"syntax {type(node).__name__} not allowed", source=self.source)

    def _name(self, name):
        self.names.add(name)
        if name in _CONSTS:
            v = _CONSTS[name]
            return lambda env: v
        if name == "s":
            return lambda env: np.asarray(env["s"], dtype=float)
        if name == "unorm":
            return lambda env: np.linalg.norm(np.asarray(env["u"], dtype=float), axis=-1)
        if name == "ynorm":
            return lambda env: np.linalg.norm(np.asarray(env["y"], dtype=float), axis=-1)
        m = _VAR.match(name)
        if m and int(m.group(2)) <= MAX_DIM:
            key, idx = m.group(1), int(m.group(2)) - 1

            def var(env):
                arr = np.asarray(env[key], dtype=float)
                if arr.shape[-1] <= idx:
                    raise ExpressionError(f"variable {name} exceeds the dimension", source=self.source)
                return arr[..., idx]

            return var
        raise ExpressionError(f"unknown name {name!r}", source=self.source)

    def _call(self, node):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ExpressionError("only plain function calls are allowed", source=self.source)
        fname = node.func.id
        args = [self._compile(a) for a in node.args]
        if fname in _FUNCS:
            fn = _FUNCS[fname]
            return lambda env: fn(*[a(env) for a in args])
        if fname in ("min", "max"):
            if len(args) < 2:
                raise ExpressionError(f"{fname} needs at least two arguments", source=self.source)
            red = np.minimum if fname == "min" else np.maximum

            def minmax(env):
                acc = args[0](env)
                for a in args[1:]:
                    acc = red(acc, a(env))
                return acc

            return minmax
        if fname == "where":
            if len(args) != 3:
                raise ExpressionError("where(cond, a, b) takes three arguments", source=self.source)
            c, a, b = args
            return lambda env: np.where(c(env), a(env), b(env))
        if fname == "piecewise":
            if len(args) < 3 or len(args) % 2 == 0:
                raise ExpressionError("piecewise needs cond/value pairs and a default", source=self.source)
            conds, vals, default = args[0:-1:2], args[1:-1:2], args[-1]

            def piecewise(env):
                out = np.asarray(default(env), dtype=float)
                # later guards first so earlier guards win
                for c, v in zip(reversed(conds), reversed(vals)):
                    out = np.where(c(env), v(env), out)
                return out

            return piecewise
        raise ExpressionError(f"unknown function {fname!r}", source=self.source)
