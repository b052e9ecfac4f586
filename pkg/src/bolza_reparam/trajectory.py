"""Grid-based controls, states and admissible pairs.

Controls are piecewise constant on the cells of a :class:`TimeGrid`, states
are stored at the nodes and interpolated linearly in between.  The cost is
integrated cell by cell with adaptive Gauss-Kronrod quadrature.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import InvalidPair, PreconditionViolated


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size < 2:
            raise InvalidPair("a time grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidPair("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_start: float, t_end: float, n_cells: int) -> "TimeGrid":
        nodes = np.linspace(t_start, t_end, n_cells + 1)
        nodes[0], nodes[-1] = t_start, t_end
        return cls(nodes)

    @property
    def t_start(self) -> float:
        return float(self.nodes[0])

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def same_as(self, other: "TimeGrid") -> bool:
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))


@dataclass(frozen=True)
class ControlSignal:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.grid.n_cells:
            raise InvalidPair(
                "one control value per cell is required",
                cells=self.grid.n_cells,
                values=int(vals.shape[0]),
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def sup_norm(self) -> float:
        return float(self.norms().max())

    def l1_norm(self) -> float:
        return math.fsum(self.norms() * self.grid.lengths)


@dataclass(frozen=True)
class StateTrajectory:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.grid.nodes.size:
            raise InvalidPair("one state value per node is required")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, s) -> np.ndarray:
        """Linear interpolation; ``s`` may be a scalar or a 1-d array."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s_arr.shape + (self.dim,))
        for i in range(self.dim):
            out[:, i] = np.interp(s_arr, self.grid.nodes, self.values[:, i])
        return out[0] if np.ndim(s) == 0 else out

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.values, axis=1).max())


def _always(_):
    return True


@dataclass(frozen=True)
class ProblemSpec:
    """Bolza problem data: horizon, initial point, Lagrangian, dynamics and terminal cost.

    ``b`` maps a state to an ``n x m`` matrix; ``None`` means the identity
    (``n == m``), for which states are integrated exactly.  ``theta`` bounds
    ``|b(y)| <= theta (1 + |y|)``; the default 1 covers the identity.
    """

    T: float
    t: float
    x: np.ndarray
    lagrangian: object
    b: Optional[Callable] = None
    theta: float = 1.0
    g: Optional[Callable] = None
    state_set: Callable = _always
    control_cone: Callable = _always
    substeps: int = 16
    dynamics_tolerance: float = 1e-9
    quad_atol: float = 1e-10
    quad_rtol: float = 1e-8
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.atleast_1d(np.array(self.x, dtype=float))
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if not self.t < self.T:
            raise PreconditionViolated("initial time must be smaller than the horizon", t=self.t, T=self.T)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.lagrangian.m

    def with_initial(self, t: float, x) -> "ProblemSpec":
        return dataclasses.replace(self, t=float(t), x=np.atleast_1d(np.array(x, dtype=float)))

    def terminal_cost(self, y_end) -> float:
        if self.g is None:
            return 0.0
        return float(self.g(np.asarray(y_end, dtype=float)))

    def b_matrix(self, y) -> np.ndarray:
        if self.b is None:
            return np.eye(self.n, self.m)
        return np.atleast_2d(np.asarray(self.b(np.asarray(y, dtype=float)), dtype=float))

    def spot_check(self, samples: int = 64, radius: float = 10.0) -> list[str]:
        """Sampled checks of the growth bound on ``b`` and the cone property.

        Returns a list of human-readable violations (empty when all pass).
        """
        problems = []
        pts = np.linspace(-radius, radius, samples)
        for k, r in enumerate(pts):
            y = np.full(self.n, r) * (1.0 if k % 2 else -1.0) ** np.arange(self.n)
            bn = np.linalg.norm(self.b_matrix(y), 2)
            if bn > self.theta * (1 + np.linalg.norm(y)) + 1e-12 and self.b is not None:
                problems.append(f"|b(y)| exceeds theta(1+|y|) at y={y.tolist()}")
                break
        dirs = np.vstack([np.eye(self.m), -np.eye(self.m), np.ones((1, self.m))])
        for v in dirs:
            if self.control_cone(v):
                for lam in (1e-3, 0.5, 7.0, 1e3):
                    if not self.control_cone(lam * v):
                        problems.append(f"cone property fails for v={v.tolist()}, lambda={lam}")
                        break
        return problems


def _rk4_cell(problem: ProblemSpec, y0: np.ndarray, u: np.ndarray, h: float, substeps: int) -> np.ndarray:
    if problem.b is None:
        return y0 + h * u
    y = np.array(y0, dtype=float)
    dt = h / substeps
    f = lambda z: problem.b_matrix(z) @ u
    for _ in range(substeps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def integrate_state(problem: ProblemSpec, u: ControlSignal, x=None) -> StateTrajectory:
    """Solve y' = b(y) u cell by cell with RK4 substeps (exact when b is the identity)."""
    y0 = problem.x if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    h = u.grid.lengths
    ys = np.empty((u.grid.nodes.size, y0.size))
    ys[0] = y0
    if problem.b is None:
        if u.dim != y0.size:
            raise InvalidPair("identity dynamics need n == m", n=y0.size, m=u.dim)
        for k in range(h.size):
            ys[k + 1] = ys[k] + h[k] * u.values[k]
    else:
        for k in range(h.size):
            ys[k + 1] = _rk4_cell(problem, ys[k], u.values[k], h[k], problem.substeps)
    return StateTrajectory(u.grid, ys)


def dynamics_residual(problem: ProblemSpec, y: StateTrajectory, u: ControlSignal) -> float:
    """Largest relative per-cell defect between y and one RK integration of y' = b(y)u."""
    h = u.grid.lengths
    worst = 0.0
    for k in range(h.size):
        pred = _rk4_cell(problem, y.values[k], u.values[k], h[k], problem.substeps)
        scale = max(1.0, float(np.abs(y.values[k + 1]).max()))
        worst = max(worst, float(np.abs(pred - y.values[k + 1]).max()) / scale)
    return worst


@dataclass(frozen=True)
class AdmissiblePair:
    y: StateTrajectory
    u: ControlSignal
    problem: ProblemSpec
    dynamics_residual: float

    @property
    def grid(self) -> TimeGrid:
        return self.u.grid

    @classmethod
    def from_control(cls, problem: ProblemSpec, u: ControlSignal) -> "AdmissiblePair":
        y = integrate_state(problem, u)
        return cls.build(problem, y, u)

    @classmethod
    def build(cls, problem: ProblemSpec, y: StateTrajectory, u: ControlSignal, check_x: bool = True) -> "AdmissiblePair":
        if not y.grid.same_as(u.grid):
            raise InvalidPair("state and control grids differ")
        if abs(u.grid.t_start - problem.t) > 1e-12 * max(1.0, abs(problem.t)):
            raise InvalidPair("grid must start at the initial time", t=problem.t, start=u.grid.t_start)
        if abs(u.grid.t_end - problem.T) > 1e-12 * max(1.0, abs(problem.T)):
            raise InvalidPair("grid must end at the horizon", T=problem.T, end=u.grid.t_end)
        if check_x and not np.allclose(y.values[0], problem.x, rtol=0, atol=1e-12):
            raise InvalidPair("y(t) differs from the initial state")
        res = dynamics_residual(problem, y, u)
        if res > problem.dynamics_tolerance:
            raise InvalidPair("dynamics residual exceeds tolerance", residual=res, tolerance=problem.dynamics_tolerance)
        for k, yk in enumerate(y.values):
            if not problem.state_set(yk):
                raise InvalidPair("state leaves the state constraint set", node=k)
        for k, uk in enumerate(u.values):
            if not problem.control_cone(uk):
                raise InvalidPair("control leaves the control cone", cell=k)
        return cls(y, u, problem, res)


def _cell_breakpoints(model, s0, s1, y0, y1, uk) -> list[float]:
    kinks = getattr(model, "kinks", None)
    if kinks is None:
        return []
    pts = [p for p in kinks(s0, s1, y0, y1, uk) if s0 < p < s1]
    return sorted(pts)


def evaluate_cost(pair: AdmissiblePair, atol: float | None = None, rtol: float | None = None) -> float:
    """Running cost by per-cell quadrature plus the terminal cost; +inf when Lambda or g is infinite."""
    problem = pair.problem
    model = problem.lagrangian
    atol = problem.quad_atol if atol is None else atol
    rtol = problem.quad_rtol if rtol is None else rtol
    nodes, h = pair.grid.nodes, pair.grid.lengths
    U, Y = pair.u.values, pair.y.values
    if not (model.uses_s or model.uses_y):
        vals = np.asarray(model.eval(nodes[:-1], Y[:-1], U), dtype=float)
        if not np.all(np.isfinite(vals)):
            return math.inf
        running = math.fsum(vals * h)
    else:
        parts = []
        for k in range(h.size):
            s0, s1 = float(nodes[k]), float(nodes[k + 1])
            y0, y1, uk = Y[k], Y[k + 1], U[k]

            def lam(s, s0=s0, s1=s1, y0=y0, y1=y1, uk=uk):
                w = (s - s0) / (s1 - s0)
                return float(model.eval(s, (1 - w) * y0 + w * y1, uk))

            probe = [lam(s0 + f * (s1 - s0)) for f in (0.0, 0.25, 0.5, 0.75, 1.0)]
            if not all(math.isfinite(p) for p in probe):
                return math.inf
            pts = [s0] + _cell_breakpoints(model, s0, s1, y0, y1, uk) + [s1]
            for a, b in zip(pts[:-1], pts[1:]):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    val, _ = integrate.quad(lam, a, b, epsabs=atol, epsrel=rtol, limit=200)
                if not math.isfinite(val):
                    return math.inf
                parts.append(val)
        running = math.fsum(parts)
    term = problem.terminal_cost(Y[-1])
    if not math.isfinite(term):
        return math.inf
    return running + term


@dataclass(frozen=True)
class MeasureBound:
    measure: float
    bound: float
    holds: bool


def check_measure_bound(pair: AdmissiblePair, B: float, sigma: float, delta: float | None = None) -> MeasureBound:
    """Measure of {|u| < sigma} against (1 - c_delta(B)/sigma)(T - t)."""
    from .constants import compute_c_t_B

    problem = pair.problem
    alpha, d = problem.lagrangian.linear_growth
    delta = problem.t if delta is None else delta
    c_delta = compute_c_t_B(delta, B, alpha, d, problem.T)
    if sigma <= c_delta:
        raise PreconditionViolated("sigma must exceed c_delta(B)", sigma=sigma, c_delta_B=c_delta)
    small = pair.u.norms() < sigma
    measure = math.fsum(pair.grid.lengths[small])
    bound = (1 - c_delta / sigma) * (problem.T - problem.t)
    return MeasureBound(measure, bound, measure >= bound - 1e-15)


# --- import / export -------------------------------------------------------


def pair_to_csv(pair: AdmissiblePair) -> str:
    """Columns s, y_1..y_n, u_1..u_m; each control value is repeated at both cell ends."""
    n, m = pair.y.dim, pair.u.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s"] + [f"y_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)])
    nodes = pair.grid.nodes
    for k in range(pair.grid.n_cells):
        for node in (k, k + 1):
            w.writerow([repr(float(nodes[node]))] + [repr(float(v)) for v in pair.y.values[node]]
                       + [repr(float(v)) for v in pair.u.values[k]])
    return buf.getvalue()


def pair_to_dict(pair: AdmissiblePair) -> dict:
    return {
        "grid": pair.grid.nodes.tolist(),
        "states": pair.y.values.tolist(),
        "controls": pair.u.values.tolist(),
    }


def pair_from_dict(problem: ProblemSpec, data: dict, integrate_missing: bool = True) -> AdmissiblePair:
    """Build a pair from ``{"grid", "states", "controls"}``; states may be omitted."""
    try:
        grid = TimeGrid(np.asarray(data["grid"], dtype=float))
        u = ControlSignal(grid, np.asarray(data["controls"], dtype=float))
    except KeyError as exc:
        raise InvalidPair(f"missing key {exc.args[0]!r} in pair data") from None
    if "states" not in data or data["states"] is None:
        if not integrate_missing:
            raise InvalidPair("missing key 'states' in pair data")
        return AdmissiblePair.from_control(problem, u)
    y = StateTrajectory(grid, np.asarray(data["states"], dtype=float))
    return AdmissiblePair.build(problem, y, u)


def pair_from_json(problem: ProblemSpec, text: str) -> AdmissiblePair:
    return pair_from_dict(problem, json.loads(text))
