"""Direct minimization over piecewise-constant controls and the Lavrentiev probe.

The optimizer is derivative-free: golden-section line searches along
single control coordinates and along endpoint-preserving transfers
between two cells.  Lambda may jump in y and u, so no gradients are used.
Trial costs use a fixed Gauss-Legendre rule per cell and only recompute
the cells a move touches; every returned cost is re-evaluated with the
adaptive quadrature of :func:`evaluate_cost`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidPair, NoAdmissiblePoint, PreconditionViolated
from .reparam import nice_pair
from .sampling import thread_cap
from .trajectory import AdmissiblePair, ControlSignal, ProblemSpec, TimeGrid, _always, evaluate_cost, integrate_state

ENDPOINT_TOL = 1e-6
NOISE_TOL = 1e-6
GOLDEN = (math.sqrt(5) - 1) / 2

CAVEAT = ("Costs are infima over piecewise-constant controls on finite grids; convergence of this lattice "
          "to the infimum over absolutely continuous arcs is assumed, not proved, when Lambda is discontinuous.")


@dataclass(frozen=True)
class HardEndpoint:
    """Terminal cost 0 within ``tol`` of ``target`` and +inf outside."""

    target: tuple
    tol: float = ENDPOINT_TOL

    def __call__(self, y) -> float:
        d = np.linalg.norm(np.atleast_1d(y) - np.asarray(self.target, dtype=float))
        return 0.0 if d <= self.tol else math.inf


@dataclass(frozen=True)
class QuadraticEndpoint:
    """Terminal cost ``weight * |y - target|^2``."""

    target: tuple
    weight: float = 1.0

    def __call__(self, y) -> float:
        d = np.atleast_1d(y) - np.asarray(self.target, dtype=float)
        return float(self.weight * np.dot(d, d))

    def batch(self, Y: np.ndarray) -> np.ndarray:
        d = Y - np.asarray(self.target, dtype=float)
        return self.weight * np.einsum("ij,ij->i", d, d)


@dataclass(frozen=True)
class MinimizeConfig:
    """Ladders and budgets for the direct solver.

    ``inner_iters`` is the sweep budget per start, ``line_iters`` the
    golden-section steps per line search.
    """

    grid_ladder: tuple = (16, 32, 64, 128, 256)
    control_bound_ladder: tuple = (2.0, 4.0, 8.0, 16.0)
    inner_iters: int = 40
    restarts: int = 2
    seed: int = 0
    line_iters: int = 6
    scan_points: int = 17
    gauss_points: int = 4
    step_min: float = 1e-3
    noise_tol: float = NOISE_TOL
    gap_tol_rel: float = 1e-3
    multilevel: bool = True
    coarsest: int = 4
    scan_levels: int = 5
    scan_budget: int = 400_000

    def __post_init__(self):
        for name in ("grid_ladder", "control_bound_ladder"):
            lad = tuple(getattr(self, name))
            object.__setattr__(self, name, lad)
            if not lad or any(b <= a for a, b in zip(lad[:-1], lad[1:])):
                raise PreconditionViolated(f"{name} must be nonempty and strictly increasing", ladder=list(lad))
        if min(self.grid_ladder) < 1 or min(self.control_bound_ladder) <= 0:
            raise PreconditionViolated("ladder entries must be positive")
        if self.inner_iters < 1 or self.line_iters < 1 or self.scan_points < 3 or self.restarts < 0 or self.gauss_points < 1:
            raise PreconditionViolated("budgets must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "MinimizeConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise PreconditionViolated("unknown minimize config keys", keys=sorted(unknown))
        return cls(**data)


# -- objective --------------------------------------------------------------------


class _Objective:
    """Cell-wise cost with cached per-cell values, for identity or general dynamics."""

    def __init__(self, problem: ProblemSpec, grid: TimeGrid, n_gauss: int):
        self.problem = problem
        self.model = problem.lagrangian
        self.grid = grid
        self.h = grid.lengths
        self.nodes = grid.nodes
        self.identity = problem.b is None
        self.local = not self.model.uses_y
        x, w = np.polynomial.legendre.leggauss(n_gauss)
        self.gx, self.gw = (x + 1) / 2, w / 2
        self.check_states = problem.state_set is not _always
        self.check_cone = problem.control_cone is not _always

    def states(self, U: np.ndarray) -> np.ndarray:
        if self.identity:
            Y = np.empty((U.shape[0] + 1, U.shape[1]))
            Y[0] = self.problem.x
            Y[1:] = self.problem.x + np.cumsum(self.h[:, None] * U, axis=0)
            return Y
        return integrate_state(self.problem, ControlSignal(self.grid, U)).values

    def cell_costs(self, ks: np.ndarray, U: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Cost of cells ``ks`` given their controls ``U[ks]`` and the full node states ``Y``."""
        h = self.h[ks]
        Uk = U[ks]
        if not (self.model.uses_s or self.model.uses_y):
            lam = np.asarray(self.model.eval(0.0, Y[ks], Uk), dtype=float)
            return h * lam
        s = self.nodes[ks][:, None] + h[:, None] * self.gx[None, :]
        y = Y[ks][:, None, :] * (1 - self.gx)[None, :, None] + Y[ks + 1][:, None, :] * self.gx[None, :, None]
        lam = np.asarray(self.model.eval(s, y, Uk[:, None, :]), dtype=float)
        return h * (lam @ self.gw)

    def cell_costs_batch(self, ks: np.ndarray, Uk: np.ndarray, Y0: np.ndarray, Y1: np.ndarray) -> np.ndarray:
        """Batched :meth:`cell_costs`: leading axis indexes trials; Y0/Y1 are the cells' end states."""
        h = self.h[ks]
        if not (self.model.uses_s or self.model.uses_y):
            return h * np.asarray(self.model.eval(0.0, Y0, Uk), dtype=float)
        s = self.nodes[ks][:, None] + h[:, None] * self.gx[None, :]
        y = Y0[:, :, None, :] * (1 - self.gx)[None, None, :, None] + Y1[:, :, None, :] * self.gx[None, None, :, None]
        lam = np.asarray(self.model.eval(s, y, Uk[:, :, None, :]), dtype=float)
        return h * (lam @ self.gw)

    def admissible(self, U_rows: np.ndarray, Y_rows: np.ndarray) -> bool:
        if self.check_cone and not all(self.problem.control_cone(u) for u in U_rows):
            return False
        if self.check_states and not all(self.problem.state_set(y) for y in Y_rows):
            return False
        return True

    def full(self, U: np.ndarray):
        Y = self.states(U)
        cc = self.cell_costs(np.arange(U.shape[0]), U, Y)
        ok = self.admissible(U, Y)
        total = math.fsum(cc) + self.problem.terminal_cost(Y[-1]) if ok else math.inf
        if not math.isfinite(total):
            total = math.inf
        return total, Y, cc


def _bound_interval(u: np.ndarray, d: np.ndarray, bound: float) -> tuple:
    """Steps a with |u + a d| <= bound."""
    if not math.isfinite(bound):
        return -math.inf, math.inf
    a = float(d @ d)
    b = 2.0 * float(u @ d)
    c = float(u @ u) - bound * bound
    disc = b * b - 4 * a * c
    if a == 0:
        return (-math.inf, math.inf) if c <= 0 else (math.nan, math.nan)
    if disc < 0:
        return math.nan, math.nan
    r = math.sqrt(disc)
    return (-b - r) / (2 * a), (-b + r) / (2 * a)


def _golden(f, lo: float, hi: float, iters: int) -> tuple:
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best = (f1, x1) if f1 <= f2 else (f2, x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
            cand = (f1, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
            cand = (f2, x2)
        if cand[0] < best[0]:
            best = cand
    return best


@dataclass
class _Move:
    cells: np.ndarray  # cells whose control changes
    dU: np.ndarray  # change per unit step, one row per entry of ``cells``
    first_node: int  # first node whose state changes
    last_node: int  # last node whose state changes (identity dynamics)
    dY: np.ndarray  # state change per unit step on nodes first_node..last_node
    touched: np.ndarray = None  # cells whose cost changes
    pos: np.ndarray = None  # positions of ``cells`` inside ``touched``
    shift0: np.ndarray = None  # state change per unit step at the left node of each touched cell
    shift1: np.ndarray = None  # same at the right node

    def prepare(self, N: int, local: bool) -> "_Move":
        if local:
            self.touched = np.unique(self.cells)
        else:
            lo = max(self.first_node - 1, 0)
            hi = min(self.last_node + 1, N)
            self.touched = np.union1d(self.cells, np.arange(lo, hi))
        self.pos = np.searchsorted(self.touched, self.cells)
        n = self.dY.shape[1]
        full = np.zeros((N + 1, n))
        full[self.first_node:self.last_node + 1] = self.dY
        self.shift0 = full[self.touched]
        self.shift1 = full[self.touched + 1]
        return self


def _moves(obj: _Objective, N: int, m: int, keep_endpoint: bool, rng: np.random.Generator) -> list:
    h = obj.h
    out = []
    # for state-dependent costs a long transfer is as expensive as a tail shift, so only
    # adjacent transfers are used there
    nodal = obj.identity and not obj.local
    if not keep_endpoint:
        for k in range(N):
            for i in range(m):
                e = np.zeros(m)
                e[i] = 1.0
                dY = np.tile(h[k] * e, (N - k, 1))
                out.append(_Move(np.array([k]), e[None, :], k + 1, N, dY))
    if N >= 2 and (keep_endpoint or obj.identity):
        partners = [(k, k + 1) for k in range(N - 1)]
        if N >= 4 and not nodal:
            partners += [(k, (k + N // 2) % N) for k in range(N)]
        for k, j in partners:
            a, b = min(k, j), max(k, j)
            for i in range(m):
                e = np.zeros(m)
                e[i] = 1.0
                dU = np.vstack([e / h[a], -e / h[b]])
                dY = np.tile(e, (b - a, 1))
                out.append(_Move(np.array([a, b]), dU, a + 1, b, dY))
    order = rng.permutation(len(out))
    return [out[i].prepare(N, obj.local) for i in order]


def _line_values(obj: _Objective, U, Y, cc, g_end, total, mv: _Move, alphas: np.ndarray) -> np.ndarray:
    """Objective along ``U + alpha * move`` for a batch of steps (identity dynamics)."""
    A = alphas[:, None, None]
    t = mv.touched
    Ub = U[t][None] + 0.0 * A
    Ub[:, mv.pos] += A * mv.dU[None]
    Y0 = Y[t][None] + A * mv.shift0[None]
    Y1 = Y[t + 1][None] + A * mv.shift1[None]
    new_cc = obj.cell_costs_batch(t, Ub, Y0, Y1)
    vals = (total - math.fsum(cc[t])) + new_cc.sum(axis=1)
    if mv.last_node == U.shape[0]:
        yT = Y[-1][None] + alphas[:, None] * mv.dY[-1][None]
        vals = vals - g_end + np.array([obj.problem.terminal_cost(y) for y in yT])
    if obj.check_cone or obj.check_states:
        for i in range(alphas.size):
            ys = Y[mv.first_node:mv.last_node + 1] + alphas[i] * mv.dY
            if not obj.admissible(Ub[i, mv.pos], ys):
                vals[i] = math.inf
    vals[~np.isfinite(vals)] = math.inf
    return vals


def _descend(obj: _Objective, U0: np.ndarray, bound: float, config: MinimizeConfig, keep_endpoint: bool,
             rng: np.random.Generator) -> tuple:
    """Coordinate descent: a vectorized scan of each move's step range, then golden-section refinement."""
    N, m = U0.shape
    U = U0.copy()
    total, Y, cc = obj.full(U)
    if not math.isfinite(total):
        return math.inf, U
    moves = _moves(obj, N, m, keep_endpoint, rng)
    scale = max(1.0, float(np.abs(U).max()), 0.5 * bound if math.isfinite(bound) else 1.0)
    step = scale
    g_end = obj.problem.terminal_cost(Y[-1])
    scan = np.linspace(-1.0, 1.0, config.scan_points)
    for _ in range(config.inner_iters):
        accepted = 0
        start_total = total
        for mv in moves:
            lo, hi = -step, step
            for row, k in enumerate(mv.cells):
                a, b = _bound_interval(U[k], mv.dU[row], bound)
                lo, hi = max(lo, a), min(hi, b)
            if not (hi > lo):
                continue
            if obj.identity:
                touched = mv.touched

                def f(alphas, mv=mv):
                    return _line_values(obj, U, Y, cc, g_end, total, mv, np.atleast_1d(np.asarray(alphas, float)))
            else:
                def f(alphas, mv=mv):
                    out = []
                    for al in np.atleast_1d(alphas):
                        Ut = U.copy()
                        Ut[mv.cells] += al * mv.dU
                        out.append(obj.full(Ut)[0])
                    return np.array(out)

            grid = lo + (hi - lo) * (scan + 1) / 2
            vals = f(grid)
            j = int(np.argmin(vals))
            if not math.isfinite(vals[j]):
                continue
            # zoom once with a finer batched scan, then golden-section inside the new bracket
            left, right = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
            fine = np.linspace(left, right, config.scan_points)
            fvals = f(fine)
            jf = int(np.argmin(fvals))
            if fvals[jf] < vals[j]:
                j, grid, vals = jf, fine, fvals
                left, right = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
            g_val, g_alpha = _golden(lambda al: float(f(al)[0]), left, right, config.line_iters)
            best_val, best_alpha = (g_val, g_alpha) if g_val < vals[j] else (float(vals[j]), float(grid[j]))
            if best_val < total - 1e-15 * (1 + abs(total)):
                Ut = U.copy()
                Ut[mv.cells] += best_alpha * mv.dU
                if obj.identity:
                    Yt = Y.copy()
                    Yt[mv.first_node:mv.last_node + 1] += best_alpha * mv.dY
                    new_cc = obj.cell_costs(touched, Ut, Yt)
                    cc = cc.copy()
                    cc[touched] = new_cc
                    U, Y = Ut, Yt
                    total = math.fsum(cc) + obj.problem.terminal_cost(Y[-1])
                else:
                    total, Y, cc = obj.full(Ut)
                    U = Ut
                g_end = obj.problem.terminal_cost(Y[-1])
                accepted += 1
        total, Y, cc = obj.full(U)
        g_end = obj.problem.terminal_cost(Y[-1])
        if accepted == 0 or start_total - total <= 0.1 * config.noise_tol * (1 + abs(total)):
            step /= 4
            if step < config.step_min * scale:
                break
    return total, U


def _project(U: np.ndarray, bound: float) -> np.ndarray:
    if not math.isfinite(bound):
        return U
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    return np.where(norms > bound, U * (bound / np.maximum(norms, 1e-300)), U)


def _starts(problem: ProblemSpec, grid: TimeGrid, bound: float, config: MinimizeConfig, extra: Sequence) -> list:
    N, m = grid.n_cells, problem.m
    g = problem.g
    keep = isinstance(g, HardEndpoint) and problem.b is None
    if keep:
        base = np.tile((np.asarray(g.target, dtype=float) - problem.x) / (problem.T - problem.t), (N, 1))
    else:
        base = np.zeros((N, m))
    starts = [base]
    rng = np.random.default_rng(config.seed)
    sigma = 0.5 * min(1.0, bound)
    for _ in range(config.restarts):
        noise = rng.normal(scale=sigma, size=(N, m))
        if keep:
            h = grid.lengths
            noise -= (h[:, None] * noise).sum(axis=0) / h.sum()
        starts.append(base + noise)
    for U in extra:
        U = np.asarray(U, dtype=float)
        if U.shape == (N, m):
            starts.append(U)
    return [_project(U, bound) for U in starts]


def _terminal_batch(g, Y_end: np.ndarray) -> np.ndarray:
    if g is None:
        return np.zeros(Y_end.shape[0])
    if hasattr(g, "batch"):
        return g.batch(Y_end)
    return np.array([g(y) for y in Y_end], dtype=float)


def _scan_starts(problem: ProblemSpec, grid: TimeGrid, bound: float, config: MinimizeConfig, keep: int = 3) -> list:
    """Best points of a full tensor grid of control values on a few coarse cells.

    Coordinate moves cannot cross a barrier where Lambda jumps in y; an
    exhaustive coarse scan finds the basin first.  Identity dynamics only.
    With a hard endpoint the last cell's control is solved for.
    """
    if problem.b is not None:
        return []
    N, m = grid.n_cells, problem.m
    hard = isinstance(problem.g, HardEndpoint)
    levels = config.scan_levels
    budget = config.scan_budget
    if not hard and problem.g is not None and not hasattr(problem.g, "batch"):
        budget = min(budget, 4096)
    cells = N
    while cells > 1 and (levels ** (m * (cells - hard)) > budget or N % cells):
        cells -= 1
    if levels ** (m * (cells - hard)) > budget or (hard and cells < 2):
        return []
    if math.isfinite(bound):
        top = bound
    else:
        top = 2.0 * max(1.0, float(np.abs(problem.x).max()) / (problem.T - problem.t))
    vals = np.linspace(-top, top, levels)
    free = cells - hard
    h = (problem.T - problem.t) / cells
    model = problem.lagrangian
    x, w = np.polynomial.legendre.leggauss(config.gauss_points)
    gx, gw = (x + 1) / 2, w / 2
    nodes = problem.t + h * np.arange(cells + 1)
    best_cost, best_U = np.full(0, np.inf), np.zeros((0, cells, m))
    total = levels ** (m * free)
    chunk = max(1, 200_000 // max(1, cells * config.gauss_points))
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // levels ** np.arange(m * free)[None, :]) % levels
        U = vals[digits].reshape(-1, free, m)
        if hard:
            target = np.asarray(problem.g.target, dtype=float)
            last = (target - problem.x - h * U.sum(axis=1)) / h
            U = np.concatenate([U, last[:, None, :]], axis=1)
        ok = np.linalg.norm(U, axis=2).max(axis=1) <= bound * (1 + 1e-12)
        Y = np.concatenate([np.broadcast_to(problem.x, (U.shape[0], 1, m)),
                            problem.x + np.cumsum(h * U, axis=1)], axis=1)
        if model.uses_s or model.uses_y:
            sq = nodes[:-1][:, None] + h * gx[None, :]
            yq = Y[:, :-1, None, :] * (1 - gx)[None, None, :, None] + Y[:, 1:, None, :] * gx[None, None, :, None]
            lam = np.asarray(model.eval(sq, yq, U[:, :, None, :]), dtype=float) @ gw
        else:
            lam = np.asarray(model.eval(0.0, Y[:, :-1], U), dtype=float)
        cost = h * lam.sum(axis=1)
        if not hard:
            cost = cost + _terminal_batch(problem.g, Y[:, -1])
        cost = np.where(ok & np.isfinite(cost), cost, np.inf)
        best_cost = np.concatenate([best_cost, cost])
        best_U = np.concatenate([best_U, U])
        order = np.argsort(best_cost, kind="stable")[:keep]
        best_cost, best_U = best_cost[order], best_U[order]
    return [_refine_controls(U, N // cells) for c, U in zip(best_cost, best_U) if math.isfinite(c)]


@dataclass(frozen=True)
class SolveResult:
    pair: AdmissiblePair
    cost: float
    surrogate_cost: float
    starts_tried: int


def solve(problem: ProblemSpec, grid: TimeGrid, control_bound: float = math.inf,
          config: MinimizeConfig | None = None, *, warm_starts: Sequence = ()) -> SolveResult:
    """Multi-start descent; the best start wins on the adaptive-quadrature cost."""
    config = config or MinimizeConfig()
    if isinstance(grid, int):
        grid = TimeGrid.uniform(problem.t, problem.T, grid)
    warm_starts = list(warm_starts)
    N = grid.n_cells
    uniform = np.allclose(grid.lengths, grid.lengths[0], rtol=1e-12, atol=0)
    if config.multilevel and uniform and N % 2 == 0 and N // 2 >= config.coarsest:
        # coarse-to-fine start: moves spanning many cells are cheap on the coarse grid
        try:
            coarse = solve(problem, N // 2, control_bound, replace(config, restarts=0))
            warm_starts.append(_refine_controls(coarse.pair.u.values, 2))
        except NoAdmissiblePoint:
            pass
    elif config.scan_levels >= 2 and uniform:
        warm_starts.extend(_scan_starts(problem, grid, control_bound, config))
    obj = _Objective(problem, grid, config.gauss_points)
    keep = isinstance(problem.g, HardEndpoint) and problem.b is None
    starts = _starts(problem, grid, control_bound, config, warm_starts)

    def run(item):
        idx, U0 = item
        rng = np.random.default_rng([config.seed, idx])
        return _descend(obj, U0, control_bound, config, keep, rng)

    items = list(enumerate(starts))
    workers = min(thread_cap(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    # the surrogate can be fooled near jumps of Lambda, so every descended point and every
    # warm start is ranked by the adaptive-quadrature cost; keeping the warm starts makes the
    # lattice monotone in the bound and along nested grids
    cands = [(v, U) for v, U in results if math.isfinite(v)]
    for U in warm_starts:
        U = _project(np.asarray(U, dtype=float), control_bound)
        if U.shape == (N, problem.m):
            cands.append((obj.full(U)[0], U))
    best = None
    for v, U in cands:
        if not math.isfinite(v):
            continue
        try:
            pair = AdmissiblePair.from_control(problem, ControlSignal(grid, U))
        except InvalidPair:
            continue
        cost = evaluate_cost(pair)
        if math.isfinite(cost) and (best is None or cost < best.cost):
            best = SolveResult(pair, cost, v, len(starts))
    if best is None:
        raise NoAdmissiblePoint("every start has infinite cost on this grid and bound",
                                cells=grid.n_cells, control_bound=control_bound)
    return best


def minimize_direct(problem: ProblemSpec, grid, control_bound: float = math.inf,
                    config: MinimizeConfig | None = None) -> AdmissiblePair:
    """Best admissible pair found on ``grid`` (a TimeGrid or a cell count) with ``|u| <= control_bound``."""
    return solve(problem, grid, control_bound, config).pair


def _refine_controls(U: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(U, factor, axis=0)


def minimizing_sequence(problem: ProblemSpec, ctx, certificate, config: MinimizeConfig | None = None,
                        eta: float = 0.0, sampler=None) -> list:
    """Minimize on each grid of the ladder, then make each result nice with one shared plan."""
    config = config or MinimizeConfig()
    bound = config.control_bound_ladder[-1]
    out, prev = [], None
    for cells in config.grid_ladder:
        warm = []
        if prev is not None and cells % prev.shape[0] == 0:
            warm = [_refine_controls(prev, cells // prev.shape[0])]
        res = solve(problem, TimeGrid.uniform(problem.t, problem.T, cells), bound, config, warm_starts=warm)
        prev = res.pair.u.values
        out.append(nice_pair(res.pair, ctx, certificate, eta, sampler=sampler))
    return out


# -- Lavrentiev probe ----------------------------------------------------------------


def richardson(coarse: float, fine: float, ratio: float) -> float:
    """First-order extrapolation from two rungs whose cell counts differ by ``ratio``."""
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return fine
    return (ratio * fine - coarse) / (ratio - 1)


@dataclass
class GapReport:
    grid_ladder: tuple
    control_bound_ladder: tuple
    costs: dict  # (cells, bound) -> best cost
    bounded_inf: float
    unconstrained_inf: float
    gap_estimate: float
    gap_tol: float
    verdict: str
    monotone_grid: bool
    monotone_bound: bool
    caveat: str = CAVEAT
    notes: list = field(default_factory=list)

    def lattice_rows(self) -> list:
        return [(c, b, self.costs[(c, b)]) for c in self.grid_ladder for b in self.control_bound_ladder]

    def to_dict(self) -> dict:
        return {
            "grid_ladder": list(self.grid_ladder), "control_bound_ladder": list(self.control_bound_ladder),
            "lattice": [{"cells": c, "bound": b, "cost": v} for c, b, v in self.lattice_rows()],
            "bounded_inf": self.bounded_inf, "unconstrained_inf": self.unconstrained_inf,
            "gap_estimate": self.gap_estimate, "gap_tol": self.gap_tol, "verdict": self.verdict,
            "monotone_grid": self.monotone_grid, "monotone_bound": self.monotone_bound,
            "caveat": self.caveat, "notes": list(self.notes),
        }


def _monotone(seq: Sequence[float], tol: float) -> bool:
    vals = [v for v in seq if math.isfinite(v)]
    return all(b <= a + tol * (1 + abs(a)) for a, b in zip(vals[:-1], vals[1:]))


def lavrentiev_probe(problem: ProblemSpec, config: MinimizeConfig | None = None,
                     gap_tol: Optional[float] = None) -> GapReport:
    """Best costs over the (grid x bound) lattice and the extrapolated bounded versus unconstrained infima.

    Each cell is warm-started from its coarser-grid and smaller-bound
    neighbours, so the lattice is monotone up to quadrature noise.
    """
    config = config or MinimizeConfig()
    grids, bounds = config.grid_ladder, config.control_bound_ladder
    costs, controls = {}, {}
    for gi, cells in enumerate(grids):
        grid = TimeGrid.uniform(problem.t, problem.T, cells)
        for bi, bound in enumerate(bounds):
            warm = []
            if bi > 0 and (cells, bounds[bi - 1]) in controls:
                warm.append(controls[(cells, bounds[bi - 1])])
            if gi > 0 and (grids[gi - 1], bound) in controls and cells % grids[gi - 1] == 0:
                warm.append(_refine_controls(controls[(grids[gi - 1], bound)], cells // grids[gi - 1]))
            try:
                res = solve(problem, grid, bound, config, warm_starts=warm)
                costs[(cells, bound)] = res.cost
                controls[(cells, bound)] = res.pair.u.values
            except NoAdmissiblePoint:
                costs[(cells, bound)] = math.inf

    top = bounds[-1]
    if len(grids) >= 2:
        ratio = grids[-1] / grids[-2]
        bounded = richardson(costs[(grids[-2], top)], costs[(grids[-1], top)], ratio)
        k = min(len(grids), len(bounds))
        diag = list(zip(grids[-k:], bounds[-k:]))
        if k >= 2:
            unconstrained = richardson(costs[diag[-2]], costs[diag[-1]], diag[-1][0] / diag[-2][0])
        else:
            unconstrained = costs[diag[-1]]
    else:
        bounded = unconstrained = costs[(grids[-1], top)]
    notes = []
    # extrapolation may undershoot the best lattice value; the lattice min is an upper bound for both
    best_seen = min(costs.values())
    if not math.isfinite(unconstrained):
        unconstrained = best_seen
        notes.append("joint-refinement rungs infinite; unconstrained inf taken as the lattice minimum")
    gap = bounded - unconstrained if math.isfinite(bounded) else math.inf
    tol = config.gap_tol_rel * (1 + abs(unconstrained)) if gap_tol is None else gap_tol
    mono_grid = all(_monotone([costs[(c, b)] for c in grids], config.noise_tol) for b in bounds)
    mono_bound = all(_monotone([costs[(c, b)] for b in bounds], config.noise_tol) for c in grids)
    verdict = "NoGapDetected" if gap <= tol else "GapSuspected"
    return GapReport(tuple(grids), tuple(bounds), costs, bounded, unconstrained, gap, tol, verdict,
                     mono_grid, mono_bound, notes=notes)
