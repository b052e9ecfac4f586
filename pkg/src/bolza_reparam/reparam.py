"""Time reparametrization of an admissible pair into a bounded-control pair.

The pipeline slows the pair down where ``|u| > nu`` and speeds it up on a
compensating set Sigma where ``|u|`` is small, so that the new control is
bounded by ``nu`` and the cost does not increase.  Everything that depends
only on the problem data (mu, rho, m, nu, the sampled Xi and Upsilon) is
collected in a :class:`ReparamPlan`; it is shared by every pair with the
same bounds, which is what makes nu uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .constants import BoundsContext, SupInfEstimate, min_lambda_near_boundary, upsilon_table, xi_profile
from .errors import (ConeViolation, CertificateRequired, CostRegression, InsufficientRoom, MuInfeasible,
                     NotFound, PreconditionViolated, RhoSearchFailed, SlopeNonpositive)
from .growth import Condition, GrowthCertificate
from .lagrangian import LagrangianModel
from .sampling import SamplerConfig
from .trajectory import (AdmissiblePair, ControlSignal, StateTrajectory, TimeGrid, _rk4_cell, evaluate_cost)

RHO_MIN = 1e-9
NU_MAX_DOUBLINGS = 60
PHI_END_TOL = 1e-12

Intervals = tuple  # sorted, disjoint ((a, b), ...)


# -- interval arithmetic --------------------------------------------------------------


def measure(iv: Sequence) -> float:
    return math.fsum(b - a for a, b in iv)


def cells_to_intervals(nodes: np.ndarray, mask: np.ndarray) -> Intervals:
    """Union of the cells flagged in ``mask``, adjacent cells merged."""
    out = []
    for k in np.flatnonzero(mask):
        a, b = float(nodes[k]), float(nodes[k + 1])
        if out and out[-1][1] == a:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return tuple(out)


def intersect(x: Sequence, y: Sequence) -> Intervals:
    out, i, j = [], 0, 0
    while i < len(x) and j < len(y):
        a, b = max(x[i][0], y[j][0]), min(x[i][1], y[j][1])
        if a < b:
            out.append((a, b))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


def subtract(x: Sequence, y: Sequence) -> Intervals:
    out = []
    for a, b in x:
        cur = a
        for c, d in y:
            if d <= cur or c >= b:
                continue
            if c > cur:
                out.append((cur, c))
            cur = max(cur, d)
            if cur >= b:
                break
        if cur < b:
            out.append((cur, b))
    return tuple(out)


def contains(iv: Sequence, s: float) -> bool:
    return any(a <= s <= b for a, b in iv)


# -- level sets -----------------------------------------------------------------------


@dataclass(frozen=True)
class LevelSets:
    S_nu: Intervals
    excess: float
    Omega_mu: Intervals = ()
    J_rho: Intervals = ()
    Omega: Intervals = ()
    Sigma_nu: Intervals = ()

    def to_dict(self) -> dict:
        return {
            "S_nu": [list(p) for p in self.S_nu], "excess": self.excess,
            "Omega_mu": [list(p) for p in self.Omega_mu], "J_rho": [list(p) for p in self.J_rho],
            "Omega": [list(p) for p in self.Omega], "Sigma_nu": [list(p) for p in self.Sigma_nu],
            "measure_S_nu": measure(self.S_nu), "measure_Omega": measure(self.Omega),
            "measure_Sigma_nu": measure(self.Sigma_nu),
        }


def compute_level_set_S(u: ControlSignal, nu: float) -> tuple:
    """S_nu = {|u| > nu} as intervals and the excess integral of (|u|/nu - 1) over it."""
    if nu <= 0:
        raise PreconditionViolated("need nu > 0", nu=nu)
    norms = u.norms()
    mask = norms > nu
    excess = math.fsum((norms[mask] / nu - 1.0) * u.grid.lengths[mask])
    return cells_to_intervals(u.grid.nodes, mask), excess


def _cell_distances(pair: AdmissiblePair) -> np.ndarray:
    """Smallest distance to the domain boundary over each cell (checked at both ends and the middle)."""
    model = pair.problem.lagrangian
    nodes, Y, U = pair.grid.nodes, pair.y.values, pair.u.values
    if not model.is_extended:
        return np.full(U.shape[0], np.inf)
    if model.domain_is_product and not (model.uses_s or model.uses_y):
        return np.asarray(model.dist_to_boundary(nodes[:-1], Y[:-1], U), dtype=float)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    ym = 0.5 * (Y[:-1] + Y[1:])
    d = [model.dist_to_boundary(s, y, U) for s, y in ((nodes[:-1], Y[:-1]), (mids, ym), (nodes[1:], Y[1:]))]
    return np.minimum.reduce([np.asarray(v, dtype=float) for v in d])


def j_rho(pair: AdmissiblePair, rho: Optional[float], dists: np.ndarray | None = None) -> Intervals:
    """J_rho = {s : dist((s, y(s), u(s)), boundary) >= 2 rho}; the whole interval for real-valued models."""
    nodes = pair.grid.nodes
    if rho is None or not pair.problem.lagrangian.is_extended:
        return ((float(nodes[0]), float(nodes[-1])),)
    d = _cell_distances(pair) if dists is None else dists
    return cells_to_intervals(nodes, d >= 2 * rho)


def omega_mu(u: ControlSignal, mu: float, c: float) -> Intervals:
    return cells_to_intervals(u.grid.nodes, u.norms() / mu < c)


def mu0_delta(c_delta: float, c: float) -> tuple:
    """Midpoint choices mu0 = (c_delta/c + 1)/2 and Delta = (c_delta/(mu0 c) + 1)/2."""
    x = c_delta / c
    if x >= 1:
        raise MuInfeasible("c must exceed c_delta(B)", c=c, c_delta_B=c_delta)
    mu0 = (x + 1) / 2
    return mu0, (x / mu0 + 1) / 2


def m_of(delta_cap: float, c_delta: float, mu: float, c: float) -> float:
    return delta_cap - c_delta / (mu * c)


def select_mu_rho(ctx: BoundsContext, pair: AdmissiblePair, c: float, rho_bar: Optional[float],
                  rho_min: float = RHO_MIN) -> tuple:
    """(mu, rho, m, Omega) with rho halved from rho_bar until |J_rho| >= Delta (T - t)."""
    mu0, Delta = mu0_delta(ctx.c_delta_B, c)
    T, t = pair.problem.T, pair.problem.t
    model = pair.problem.lagrangian
    if not model.is_extended:
        rho, J = None, ((t, T),)
    else:
        dists = _cell_distances(pair)
        rho = 1.0 if rho_bar is None else float(rho_bar)
        while True:
            J = j_rho(pair, rho, dists)
            if measure(J) >= Delta * (T - t):
                break
            rho /= 2
            if rho < rho_min:
                raise RhoSearchFailed("no rho gives |J_rho| >= Delta (T - t); the pair breaks the cost bound",
                                      Delta=Delta, rho_min=rho_min)
    mu = mu0 if rho is None else max(mu0, c / (rho + c))
    m = m_of(Delta, ctx.c_delta_B, mu, c)
    Omega = intersect(omega_mu(pair.u, mu, c), J)
    return mu, rho, m, Omega


def select_Sigma(Omega: Sequence, S_nu: Sequence, eps_nu: float, mu: float) -> Intervals:
    """Leftmost fill of Omega minus S_nu up to measure eps_nu / (1 - mu)."""
    if eps_nu <= 0:
        return ()
    target = eps_nu / (1 - mu)
    room = subtract(Omega, S_nu)
    avail = measure(room)
    if avail < target * (1 - 1e-14):
        raise InsufficientRoom("not enough room for Sigma", needed=target, available=avail)
    out, need = [], target
    for a, b in room:
        if need <= 0:
            break
        length = b - a
        if length >= need * (1 - 1e-15) and length <= need * (1 + 1e-15):
            out.append((a, b))
            need = 0.0
        elif length < need:
            out.append((a, b))
            need = target - measure(out)
        else:
            out.append((a, a + need))
            need = 0.0
    return tuple(out)


# -- change of variable -----------------------------------------------------------------


def _cumsum_compensated(steps: np.ndarray, start: float) -> np.ndarray:
    """Running sums with Neumaier compensation."""
    out = np.empty(steps.size + 1)
    out[0] = total = start
    comp = 0.0
    for i, x in enumerate(steps):
        s = total + x
        if abs(total) >= abs(x):
            comp += (total - s) + x
        else:
            comp += (x - s) + total
        total = s
        out[i + 1] = total + comp
    return out


@dataclass(frozen=True)
class ChangeOfVariable:
    """phi maps ``tau`` (original breakpoints) to ``image``; psi is the inverse."""

    tau: np.ndarray
    image: np.ndarray
    slopes: np.ndarray
    end_error: float

    def phi(self, s):
        return np.interp(s, self.tau, self.image)

    def psi(self, s):
        return np.interp(s, self.image, self.tau)

    @property
    def psi_lipschitz(self) -> float:
        return float(1.0 / self.slopes.min())

    @property
    def deviation(self) -> float:
        """sup |phi - id|, attained at a breakpoint."""
        return float(np.max(np.abs(self.image - self.tau)))

    def to_dict(self) -> dict:
        return {"tau": self.tau.tolist(), "phi": self.image.tolist(), "slopes": self.slopes.tolist(),
                "end_error": self.end_error, "deviation": self.deviation, "psi_lipschitz": self.psi_lipschitz}


def refined_nodes(grid: TimeGrid, Sigma: Sequence) -> np.ndarray:
    pts = [float(v) for v in grid.nodes] + [p for iv in Sigma for p in iv]
    return np.unique(np.asarray(pts))


def _cell_roles(tau: np.ndarray, grid: TimeGrid, S_nu: Sequence, Sigma: Sequence) -> tuple:
    """For each refined cell: index of the original cell and role 0 (plain), 1 (S_nu), 2 (Sigma)."""
    mids = 0.5 * (tau[:-1] + tau[1:])
    orig = np.clip(np.searchsorted(grid.nodes, mids, side="right") - 1, 0, grid.n_cells - 1)
    role = np.zeros(mids.size, dtype=int)
    for j, s in enumerate(mids):
        if contains(S_nu, s):
            role[j] = 1
        elif contains(Sigma, s):
            role[j] = 2
    return orig, role


def build_phi(grid: TimeGrid, S_nu: Sequence, Sigma: Sequence, mu: float, nu: float,
              u: ControlSignal) -> ChangeOfVariable:
    """phi' = |u|/nu on S_nu, mu on Sigma, 1 elsewhere; phi(t) = t and phi(T) = T checked to 1e-12."""
    if mu <= 0 or nu <= 0:
        raise SlopeNonpositive("mu and nu must be positive", mu=mu, nu=nu)
    tau = refined_nodes(grid, Sigma)
    if np.any(np.diff(tau) <= 0):
        raise SlopeNonpositive("zero-length cell in the refined grid")
    orig, role = _cell_roles(tau, grid, S_nu, Sigma)
    norms = u.norms()[orig]
    slopes = np.where(role == 1, norms / nu, np.where(role == 2, mu, 1.0))
    if np.any(slopes <= 0):
        raise SlopeNonpositive("nonpositive slope", where=int(np.argmin(slopes)))
    image = _cumsum_compensated(slopes * np.diff(tau), float(tau[0]))
    end_error = abs(image[-1] - tau[-1])
    if end_error > PHI_END_TOL * max(1.0, abs(tau[-1])):
        raise SlopeNonpositive("phi(T) differs from T; the level sets are inconsistent", error=end_error)
    image[-1] = tau[-1]
    if np.any(np.diff(image) <= 0):
        raise SlopeNonpositive("phi is not strictly increasing at float resolution")
    return ChangeOfVariable(tau, image, slopes, float(end_error))


def reparametrize_pair(pair: AdmissiblePair, cov: ChangeOfVariable, nu: float, mu: float, S_nu: Sequence,
                       Sigma: Sequence) -> AdmissiblePair:
    """ybar = y o psi on the image grid and ubar = u o psi divided by phi'."""
    problem = pair.problem
    grid = pair.grid
    orig, role = _cell_roles(cov.tau, grid, S_nu, Sigma)
    U = pair.u.values[orig]
    norms = np.linalg.norm(U, axis=1)
    with np.errstate(all="ignore"):
        ubar = np.where((role == 1)[:, None], nu * U / norms[:, None],
                        np.where((role == 2)[:, None], U / mu, U))
    # rounding can leave |nu u/|u|| an ulp above nu; shrink those rows until the bound is exact
    for k in np.flatnonzero(role == 1):
        while np.linalg.norm(ubar[k]) > nu:
            ubar[k] *= 1.0 - 2.0 ** -52
    for k, v in enumerate(ubar):
        if not problem.control_cone(v):
            raise ConeViolation("reparametrized control leaves the control cone", cell=k)
    # states at the refined nodes: original nodes keep their values, split points are integrated
    ys = np.empty((cov.tau.size, pair.y.dim))
    node_index = {float(s): i for i, s in enumerate(grid.nodes)}
    for j, s in enumerate(cov.tau):
        i = node_index.get(float(s))
        if i is not None:
            ys[j] = pair.y.values[i]
        else:
            k = int(orig[j])
            h = float(s - grid.nodes[k])
            ys[j] = _rk4_cell(problem, pair.y.values[k], pair.u.values[k], h, problem.substeps)
    new_grid = TimeGrid(cov.image)
    ybar = StateTrajectory(new_grid, ys)
    ubar_sig = ControlSignal(new_grid, ubar)
    return AdmissiblePair.build(problem, ybar, ubar_sig)


# -- the pipeline ------------------------------------------------------------------------


@dataclass(frozen=True)
class ReparamPlan:
    """Pair-independent constants of the construction."""

    condition: Condition
    c: float
    mu0: float
    Delta: float
    rho: Optional[float]
    mu: float
    m: float
    nu: float
    nu_bar: float
    Xi: SupInfEstimate
    Xi_nu_bar: float
    Upsilon: SupInfEstimate
    eta: float
    eps_star: float
    forced: tuple = ()
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.value, "c": self.c, "mu0": self.mu0, "Delta": self.Delta,
            "rho": self.rho, "mu": self.mu, "m": self.m, "nu": self.nu, "nu_bar": self.nu_bar,
            "Xi": self.Xi.to_dict(), "Xi_at_nu_bar": self.Xi_nu_bar, "Upsilon": self.Upsilon.to_dict(),
            "eta": self.eta, "eps_star": self.eps_star, "forced": list(self.forced), "notes": list(self.notes),
        }


@dataclass(frozen=True)
class ReparamCertificate:
    ctx: BoundsContext
    plan: ReparamPlan
    level_sets: LevelSets
    cov: ChangeOfVariable
    cost_before: float
    cost_after: float
    cost_bound: float
    bound_u_inf: float
    lipschitz_rank_y: float
    lipschitz_bound: float
    eps_nu: float

    @property
    def nu(self) -> float:
        return self.plan.nu

    @property
    def mu(self) -> float:
        return self.plan.mu

    @property
    def eta(self) -> float:
        return self.plan.eta

    def to_dict(self) -> dict:
        return {
            "context": self.ctx.to_dict(), **self.plan.to_dict(),
            "level_sets": self.level_sets.to_dict(), "change_of_variable": self.cov.to_dict(),
            "eps_nu": self.eps_nu, "cost_before": self.cost_before, "cost_after": self.cost_after,
            "cost_bound": self.cost_bound, "cost_delta": self.cost_after - self.cost_before,
            "bound_u_inf": self.bound_u_inf, "lipschitz_rank_y": self.lipschitz_rank_y,
            "lipschitz_bound": self.lipschitz_bound,
        }


def _xi_at(model, ctx, nu, cert, sampler, cone) -> SupInfEstimate:
    for v, x in cert.xi_ladder:
        if v == nu:
            return SupInfEstimate(x, 0, nu, confidence_note="from the certificate ladder")
    return xi_profile(model, ctx.K, [nu], sampler, T=ctx.T, cone=cone)[float(nu)]


def _xi_upper(cert: GrowthCertificate, nu: float) -> float:
    """Upper bound for Xi(nu) from the certified ladder: the value at the largest rung <= nu."""
    best = math.inf
    for v, x in cert.xi_ladder:
        if v <= nu:
            best = x
    return best


def select_nu(ctx: BoundsContext, mu: float, m: float, eps_star: float, certificate: GrowthCertificate,
              eta: float = 0.0, *, nu_bar: float | None = None, c: float | None = None,
              Xi_nu_bar: float | None = None, Upsilon: float | None = None, check_xi: bool = False) -> float:
    """Smallest nu = max(nu_bar, c) 2^k with R/nu <= min((1-mu) m (T-delta), eps*/2).

    Under M also R/nu (2 Phi + Xi(nu_bar) - Upsilon) <= eta.  Under H with
    ``check_xi`` also Xi(nu) + 2 Phi < Upsilon, needed when Upsilon was
    resampled at a rho below the certified ones.  Defaults come from the
    certificate's witnesses.
    """
    if certificate is None or not certificate.holds or certificate.condition not in (Condition.H, Condition.M):
        raise CertificateRequired("nu needs an H or M certificate that holds")
    w = certificate.witnesses
    if certificate.condition is Condition.M and not eta > 0:
        raise PreconditionViolated("eta must be positive under M", eta=eta)
    room = min((1 - mu) * m * (ctx.T - ctx.delta), eps_star / 2)
    if room <= 0:
        raise MuInfeasible("(1 - mu) m (T - delta) must be positive", mu=mu, m=m)
    nu_bar = w.nu_bar if nu_bar is None else nu_bar
    c = w.c if c is None else c
    xi_bar = w.Xi_at_nu_bar if Xi_nu_bar is None else Xi_nu_bar
    ups = w.Upsilon_at_rho if Upsilon is None else Upsilon
    nu = max(nu_bar, c)
    for _ in range(NU_MAX_DOUBLINGS):
        ok = ctx.R / nu <= room
        if ok and certificate.condition is Condition.M:
            ok = ctx.R / nu * (2 * ctx.phi_B + xi_bar - ups) <= eta
        if ok and certificate.condition is Condition.H and check_xi:
            ok = _xi_upper(certificate, nu) + 2 * ctx.phi_B < ups
        if ok:
            return nu
        nu *= 2
    raise NotFound("no admissible nu on the doubling ladder", start=max(nu_bar, c))


def uniform_rho(model: LagrangianModel, ctx: BoundsContext, Delta: float, rho_bar: float,
                sampler: SamplerConfig | None = None, rho_min: float = RHO_MIN) -> float:
    """Largest rho = rho_bar 2^-k with Lambda >= B / ((1 - Delta)(T - delta)) within 2 rho of the boundary.

    Any pair with cost <= B then has |J_rho| >= Delta (T - t).
    """
    ell = ctx.B / ((1 - Delta) * (ctx.T - ctx.delta))
    rho = rho_bar
    while rho >= rho_min:
        if min_lambda_near_boundary(model, ctx.K, 2 * rho, sampler, T=ctx.T) >= ell:
            return rho
        rho /= 2
    raise RhoSearchFailed("Lambda does not reach the level B/((1-Delta)(T-delta)) near the boundary", ell=ell)


_PLAN_CACHE: dict = {}


def plan_reparam(model: LagrangianModel, ctx: BoundsContext, certificate: GrowthCertificate, eta: float = 0.0, *,
                 sampler: SamplerConfig | None = None, cone=None, rho: float | None = None,
                 overrides: dict | None = None) -> ReparamPlan:
    """All pair-independent constants: c, mu0, Delta, rho, mu, m, nu, Xi(nu), Upsilon(rho).

    Every passing (c, nu_bar) of the certificate is tried and the one giving
    the smallest nu is kept.
    """
    if certificate is None or not certificate.holds or certificate.condition not in (Condition.H, Condition.M):
        raise CertificateRequired("the reparametrization needs an H or M certificate that holds")
    ov = dict(overrides or {})
    key = (model.name, repr(sorted(model.params.items())), ctx, id(certificate), eta, rho,
           repr(sorted(ov.items())), sampler)
    if key in _PLAN_CACHE:
        return _PLAN_CACHE[key]
    w = certificate.witnesses
    if "c" in ov:
        cands = [(float(ov["c"]), w.nu_bar, w.Xi_at_nu_bar, w.Upsilon_at_rho)]
    else:
        cands = list(certificate.candidates) or [(w.c, w.nu_bar, w.Xi_at_nu_bar, w.Upsilon_at_rho)]
    eps_star = ctx.condition_s.eps(ctx.T)
    tested = list(w.rhos)

    per_c = {}
    for c in sorted({cd[0] for cd in cands}):
        mu0, Delta = mu0_delta(ctx.c_delta_B, c)
        if not model.is_extended:
            r = None
        elif "rho" in ov:
            r = float(ov["rho"])
        elif rho is not None:
            r = rho
        else:
            start = w.rho_bar if w.rho_bar is not None else 1.0
            r = uniform_rho(model, ctx, Delta, start, sampler) if model.blows_up_at_boundary else start
        mu = float(ov["mu"]) if "mu" in ov else (mu0 if r is None else max(mu0, c / (r + c)))
        per_c[c] = (mu0, Delta, r, mu, m_of(Delta, ctx.c_delta_B, mu, c))

    # Upsilon at the pipeline's rho; certified values cover every rho >= min(tested)
    low = [(c, v[2]) for c, v in per_c.items() if v[2] is not None and tested and v[2] < min(tested)]
    resampled = {}
    if low:
        table = upsilon_table(model, ctx.K, sorted({c for c, _ in low}), sorted({r for _, r in low}), sampler,
                              T=ctx.T, cone=cone)
        resampled = {(c, r): table[(c, r)] for c, r in low}

    best = None
    for c, nu_bar, xi_bar, ups_c in cands:
        mu0, Delta, r, mu, m = per_c[c]
        ups = resampled.get((c, r)) or SupInfEstimate(ups_c, 0, c, confidence_note="from the certificate")
        if "nu" in ov:
            nu = float(ov["nu"])
        else:
            try:
                nu = select_nu(ctx, mu, m, eps_star, certificate, eta, nu_bar=nu_bar, c=c, Xi_nu_bar=xi_bar,
                               Upsilon=ups.value, check_xi=(c, r) in resampled)
            except (NotFound, MuInfeasible):
                continue
        rank = (nu, c, nu_bar)
        if best is None or rank < best[0]:
            best = (rank, c, nu_bar, xi_bar, ups, mu0, Delta, r, mu, m, nu)
    if best is None:
        raise NotFound("no certified (c, nu_bar) yields an admissible nu")
    _, c, nu_bar, xi_bar, ups, mu0, Delta, r, mu, m, nu = best
    notes = [f"Upsilon resampled at rho = {r:g}"] if (c, r) in resampled else []
    xi = _xi_at(model, ctx, nu, certificate, sampler, cone)
    plan = ReparamPlan(certificate.condition, c, mu0, Delta, r, mu, m, nu, nu_bar, xi, xi_bar, ups,
                       float(eta), eps_star, tuple(sorted(ov)), tuple(notes))
    if len(_PLAN_CACHE) > 256:
        _PLAN_CACHE.clear()
    _PLAN_CACHE[key] = plan
    return plan


def cost_tolerance(cost: float) -> float:
    return 1e-8 * (1 + abs(cost))


def nice_pair(pair: AdmissiblePair, ctx: BoundsContext, certificate: GrowthCertificate, eta: float = 0.0, *,
              sampler: SamplerConfig | None = None, overrides: dict | None = None,
              plan: ReparamPlan | None = None) -> tuple:
    """Run the whole construction and return ``(new_pair, ReparamCertificate)``.

    ``overrides`` may force ``nu``, ``mu``, ``c``, ``rho`` or ``Sigma`` (a list
    of intervals); forced values skip their selection rule but not the
    consistency checks.
    """
    problem = pair.problem
    model = problem.lagrangian
    ov = dict(overrides or {})
    sigma_forced = ov.pop("Sigma", None)
    cost_before = evaluate_cost(pair)
    if not cost_before <= ctx.B * (1 + 1e-12) + 1e-12:
        raise PreconditionViolated("the pair's cost exceeds B", cost=cost_before, B=ctx.B)
    if problem.t > ctx.delta + 1e-12:
        raise PreconditionViolated("initial time exceeds delta", t=problem.t, delta=ctx.delta)
    if plan is None:
        plan = plan_reparam(model, ctx, certificate, eta, sampler=sampler, cone=problem.control_cone, overrides=ov)

    S_nu, eps_nu = compute_level_set_S(pair.u, plan.nu)
    T, t = problem.T, problem.t
    if sigma_forced is not None:
        Sigma = tuple((float(a), float(b)) for a, b in sigma_forced)
        if intersect(Sigma, S_nu) and measure(intersect(Sigma, S_nu)) > 0:
            raise InsufficientRoom("forced Sigma overlaps S_nu")
        if abs(measure(Sigma) - eps_nu / (1 - plan.mu)) > 1e-12 * max(1.0, T - t):
            raise InsufficientRoom("forced Sigma does not have measure eps_nu / (1 - mu)",
                                   measure=measure(Sigma), needed=eps_nu / (1 - plan.mu))
        Omega_mu = omega_mu(pair.u, plan.mu, plan.c)
        J = j_rho(pair, plan.rho)
        Omega = intersect(Omega_mu, J)
    else:
        Omega_mu = omega_mu(pair.u, plan.mu, plan.c)
        J = j_rho(pair, plan.rho)
        if plan.rho is not None and measure(J) < plan.Delta * (T - t):
            # the sampled blow-up level missed this pair: fall back to per-pair halving
            _, rho, _, _ = select_mu_rho(ctx, pair, plan.c, plan.rho)
            plan = plan_reparam(model, ctx, certificate, eta, sampler=sampler, cone=problem.control_cone,
                                rho=rho, overrides=ov)
            plan = replace(plan, notes=plan.notes + ("rho halved for this pair",))
            S_nu, eps_nu = compute_level_set_S(pair.u, plan.nu)
            Omega_mu = omega_mu(pair.u, plan.mu, plan.c)
            J = j_rho(pair, plan.rho)
        Omega = intersect(Omega_mu, J)
        if measure(Omega) < plan.m * (T - t) * (1 - 1e-12) and "mu" not in ov and "c" not in ov:
            raise RhoSearchFailed("|Omega| < m (T - t); the pair breaks the premises", Omega=measure(Omega),
                                  bound=plan.m * (T - t))
        Sigma = select_Sigma(Omega, S_nu, eps_nu, plan.mu)
    levels = LevelSets(S_nu, eps_nu, Omega_mu, J, Omega, Sigma)

    cov = build_phi(pair.grid, S_nu, Sigma, plan.mu, plan.nu, pair.u)
    out = reparametrize_pair(pair, cov, plan.nu, plan.mu, S_nu, Sigma)
    cost_after = evaluate_cost(out)

    tol = cost_tolerance(cost_before)
    gap = 2 * ctx.phi_B + plan.Xi.value - plan.Upsilon.value
    bound = cost_before + eps_nu * gap
    if plan.condition is Condition.H:
        limit = min(bound, cost_before) + tol
    else:
        limit = min(bound, cost_before + plan.eta) + tol if eps_nu > 0 else cost_before + tol
    if not cost_after <= limit:
        raise CostRegression("the reparametrized cost exceeds the certified bound", cost_before=cost_before,
                             cost_after=cost_after, bound=bound, Xi=plan.Xi.value, Upsilon=plan.Upsilon.value)
    ubar_inf = out.u.sup_norm()
    h = out.grid.lengths
    lip = float(np.max(np.linalg.norm(np.diff(out.y.values, axis=0), axis=1) / h))
    cert = ReparamCertificate(ctx, plan, levels, cov, cost_before, cost_after, bound, ubar_inf, lip,
                              problem.theta * (1 + ctx.K) * plan.nu, eps_nu)
    return out, cert
