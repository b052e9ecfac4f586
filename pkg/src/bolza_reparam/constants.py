"""Closed-form constants and sampled sup/inf estimates of the radial intercept."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import EmptySampleSet, PreconditionViolated, VariantInapplicable
from .lagrangian import ConditionSData, LagrangianModel
from .sampling import (SamplerConfig, ball_points, magnitudes_at_least, magnitudes_below, profile,
                       sphere_directions, time_points)


def compute_c_t_B(t: float, B: float, alpha: float, d: float, T: float) -> float:
    """(B + d(T - t)) / (alpha (T - t))."""
    if not t < T:
        raise PreconditionViolated("need t < T", t=t, T=T)
    if alpha <= 0:
        raise PreconditionViolated("need alpha > 0", alpha=alpha)
    if B < 0 or d < 0:
        raise PreconditionViolated("need B, d >= 0", B=B, d=d)
    return (B + d * (T - t)) / (alpha * (T - t))


def compute_Phi_B(condition_s: ConditionSData, B: float, alpha: float, d: float, T: float) -> float:
    """kappa B + (A / alpha)(B + d T) + ||gamma||_1; zero for autonomous data."""
    if alpha <= 0:
        raise PreconditionViolated("need alpha > 0", alpha=alpha)
    cs = condition_s
    return cs.kappa * B + (cs.A / alpha) * (B + d * T) + cs.gamma_l1(T)


def l1_radius(B: float, alpha: float, d: float, T: float) -> float:
    """R = (B + d T) / alpha, a bound on the L1 norm of admissible controls."""
    return (B + d * T) / alpha


def gronwall_bound(R: float, theta: float, T: float, x_star_norm: float, delta_star: float) -> float:
    return delta_star + theta * T * R * math.exp(R * theta) * (x_star_norm + delta_star + 1)


@dataclass(frozen=True)
class BoundsContext:
    T: float
    delta: float
    delta_star: float
    x_star: tuple
    B: float
    alpha: float
    d: float
    theta: float
    phi_B: float
    c_delta_B: float
    R: float
    K: float
    condition_s: ConditionSData = field(default_factory=ConditionSData)

    def to_dict(self) -> dict:
        return {
            "T": self.T, "delta": self.delta, "delta_star": self.delta_star, "x_star": list(self.x_star),
            "B": self.B, "alpha": self.alpha, "d": self.d, "theta": self.theta, "Phi_B": self.phi_B,
            "c_delta_B": self.c_delta_B, "R": self.R, "K": self.K,
        }


def make_context(model: LagrangianModel, *, T: float, B: float, delta: float = 0.0, delta_star: float = 0.0,
                 x_star=(0.0,), theta: float = 1.0, K: float | None = None) -> BoundsContext:
    """Populate every constant derived from (B, delta, delta*, x*).

    ``K`` defaults to the Gronwall state bound; pass a value to override it
    (for example the sup norm of known trajectories).
    """
    alpha, d = model.linear_growth
    x_star = tuple(float(v) for v in np.atleast_1d(x_star))
    R = l1_radius(B, alpha, d, T)
    if K is None:
        K = gronwall_bound(R, theta, T, float(np.linalg.norm(x_star)), delta_star)
    return BoundsContext(
        T=T, delta=delta, delta_star=delta_star, x_star=x_star, B=B, alpha=alpha, d=d, theta=theta,
        phi_B=compute_Phi_B(model.condition_s, B, alpha, d, T),
        c_delta_B=compute_c_t_B(delta, B, alpha, d, T), R=R, K=float(K), condition_s=model.condition_s,
    )


def gronwall_state_bound(ctx: BoundsContext, T: float | None = None) -> float:
    """K = delta* + theta T R e^{R theta}(|x*| + delta* + 1)."""
    T = ctx.T if T is None else T
    return gronwall_bound(ctx.R, ctx.theta, T, float(np.linalg.norm(ctx.x_star)), ctx.delta_star)


# -- sampled sup / inf ------------------------------------------------------------


@dataclass(frozen=True)
class SupInfEstimate:
    value: float
    sample_count: int
    sample_max_abs_u: float
    refinement_delta: Optional[float] = None
    empty: bool = False
    exact: bool = False
    confidence_note: str = ""

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "samples": self.sample_count,
            "max_abs_u": self.sample_max_abs_u,
            "refinement_delta": self.refinement_delta,
        }

    @property
    def finite(self) -> bool:
        return not self.empty and math.isfinite(self.value)


def _state_dim(model: LagrangianModel, n: int | None) -> int:
    return int(n or model.n or model.m)


def xi_profile(model: LagrangianModel, K: float, nus: Sequence[float], config: SamplerConfig | None = None, *,
               T: float = 1.0, n: int | None = None, cone: Callable | None = None) -> dict:
    """Xi(nu) for several nu from a single sample cloud (suffix maxima over magnitudes)."""
    cfg = config or SamplerConfig()
    nus = sorted(float(v) for v in nus)
    mags = magnitudes_at_least(nus[0], max(cfg.u_max, nus[-1]), cfg.n_mag, extra=nus)
    prof = profile(model, mags, T=T, K=K, n=_state_dim(model, n), config=cfg, quantity="P", reduce="max", cone=cone)
    vals, cnts = prof.values[0], prof.counts[0]
    out = {}
    for nu in nus:
        sel = mags >= nu
        cnt = int(cnts[sel].sum())
        if cnt == 0:
            out[nu] = SupInfEstimate(-math.inf, 0, 0.0, empty=True, confidence_note="empty sample set")
            continue
        hit = sel & (cnts > 0)
        out[nu] = SupInfEstimate(float(vals[sel].max()), cnt, float(mags[hit].max()))
    return out


def upsilon_table(model: LagrangianModel, K: float, cs: Sequence[float], rhos: Sequence[Optional[float]],
                  config: SamplerConfig | None = None, *, T: float = 1.0, n: int | None = None,
                  cone: Callable | None = None) -> dict:
    """Upsilon(c, rho) for all pairs from a single sample cloud.  ``rho=None`` disables the distance filter."""
    cfg = config or SamplerConfig()
    cs = sorted(float(c) for c in cs)
    mags = magnitudes_below(cs, cfg.n_mag)
    rhos = list(rhos)
    prof = profile(model, mags, T=T, K=K, n=_state_dim(model, n), config=cfg, quantity="P", reduce="min",
                   dist_min=rhos, cone=cone)
    out = {}
    for f, rho in enumerate(rhos):
        vals, cnts = prof.values[f], prof.counts[f]
        for c in cs:
            sel = mags < c
            cnt = int(cnts[sel].sum())
            if cnt == 0:
                out[(c, rho)] = SupInfEstimate(math.inf, 0, 0.0, empty=True, confidence_note="empty sample set")
                continue
            hit = sel & (cnts > 0)
            out[(c, rho)] = SupInfEstimate(float(vals[sel].min()), cnt, float(mags[hit].max()))
    return out


def _with_refinement(base: SupInfEstimate, refined: SupInfEstimate, kind: str) -> SupInfEstimate:
    """Merge a base estimate with one from the refined sampler.

    The refined sample set is taken to be the union of both clouds, so a sup
    can only grow and an inf can only shrink.
    """
    if base.empty and refined.empty:
        return base
    if base.empty:
        merged = refined.value
    elif refined.empty:
        merged = base.value
    else:
        merged = max(base.value, refined.value) if kind == "sup" else min(base.value, refined.value)
    if kind == "sup":
        assert base.empty or merged >= base.value
    else:
        assert base.empty or merged <= base.value
    delta = abs(merged - base.value) if not base.empty else math.inf
    return SupInfEstimate(merged, base.sample_count + refined.sample_count,
                          max(base.sample_max_abs_u, refined.sample_max_abs_u), delta,
                          confidence_note=f"change between the last two sample doublings: {delta:.3g}")


def estimate_Xi(model: LagrangianModel, K: float, nu: float, sampler: SamplerConfig | None = None, *,
                T: float = 1.0, n: int | None = None, cone: Callable | None = None,
                refine: bool = False) -> SupInfEstimate:
    """Sampled sup of P over s in [0, T], |z| <= K, |v| >= nu (v in the cone, in the domain).

    Raises EmptySampleSet (with the -inf sentinel attached) when no sample is admissible.
    """
    if nu <= 0:
        raise PreconditionViolated("need nu > 0", nu=nu)
    cfg = sampler or SamplerConfig()
    if cfg.use_closed_forms and "Xi" in model.closed_forms:
        v = float(model.closed_forms["Xi"](nu, K=K, T=T))
        return SupInfEstimate(v, 0, nu, 0.0, exact=True, confidence_note="closed form")
    est = xi_profile(model, K, [nu], cfg, T=T, n=n, cone=cone)[float(nu)]
    if refine:
        est = _with_refinement(est, xi_profile(model, K, [nu], cfg.refined(), T=T, n=n, cone=cone)[float(nu)], "sup")
    if est.empty:
        raise EmptySampleSet("no admissible sample with |v| >= nu", estimate=est, nu=nu)
    return est


def estimate_Upsilon(model: LagrangianModel, K: float, c: float, rho: float | None = None,
                     sampler: SamplerConfig | None = None, *, T: float = 1.0, n: int | None = None,
                     cone: Callable | None = None, refine: bool = False) -> SupInfEstimate:
    """Sampled inf of P over |v| < c at distance >= rho from the domain boundary.

    Raises EmptySampleSet (with the +inf sentinel attached) when no sample is admissible.
    """
    if c <= 0:
        raise PreconditionViolated("need c > 0", c=c)
    cfg = sampler or SamplerConfig()
    if cfg.use_closed_forms and "Upsilon" in model.closed_forms:
        v = float(model.closed_forms["Upsilon"](c, rho=rho, K=K, T=T))
        return SupInfEstimate(v, 0, c, 0.0, exact=True, confidence_note="closed form")
    key = (float(c), rho)
    est = upsilon_table(model, K, [c], [rho], cfg, T=T, n=n, cone=cone)[key]
    if refine:
        est = _with_refinement(est, upsilon_table(model, K, [c], [rho], cfg.refined(), T=T, n=n, cone=cone)[key], "inf")
    if est.empty:
        raise EmptySampleSet("no admissible sample with |v| < c at the requested distance", estimate=est, c=c, rho=rho)
    return est


_NEAR_BOUNDARY_CACHE: dict = {}
NEAR_BOUNDARY_WIDTHS = tuple(2.0 ** -k for k in range(-2, 41))


def min_lambda_near_boundary(model: LagrangianModel, K: float, width: float, config: SamplerConfig | None = None,
                             *, T: float = 1.0, n: int | None = None, c_max: float = 1e3) -> float:
    """Sampled min of Lambda over in-domain points closer than ``width`` to the boundary.

    One sample cloud answers every width: the mins are tabulated on the
    dyadic widths 4, 2, 1, ..., 2^-40 and a query returns the entry for the
    smallest tabulated width >= ``width`` (a min over a superset, so never larger).
    """
    cfg = config or SamplerConfig()
    key = (id(model), float(K), cfg, float(T), n, float(c_max))
    hit = _NEAR_BOUNDARY_CACHE.get(key)
    if hit is None or hit[0] is not model:
        mags = np.unique(np.concatenate([magnitudes_below(c_max, cfg.n_mag), magnitudes_below(1.0, cfg.n_mag),
                                         magnitudes_below(2.0, cfg.n_mag)]))
        prof = profile(model, mags, T=T, K=K, n=_state_dim(model, n), config=cfg, quantity="L", reduce="min",
                       dist_below=NEAR_BOUNDARY_WIDTHS)
        table = {w: (float(prof.values[f].min()) if prof.counts[f].sum() else math.inf)
                 for f, w in enumerate(NEAR_BOUNDARY_WIDTHS)}
        if len(_NEAR_BOUNDARY_CACHE) > 64:
            _NEAR_BOUNDARY_CACHE.clear()
        hit = _NEAR_BOUNDARY_CACHE[key] = (model, table)
    table = hit[1]
    fits = [w for w in table if w >= width * (1 - 1e-12)]
    if not fits:
        raise PreconditionViolated("width exceeds the tabulated range", width=width, max_width=max(table))
    return table[min(fits)]


# -- uniform cost bound -------------------------------------------------------------

UNIFORM_B_VARIANTS = ("cv_convex_S", "zero_control", "full_state")


def compute_uniform_B(problem, variant: str, *, delta: float = 0.0, delta_star: float = 0.0, x_star=None,
                      xi_star=None, u_star=None, n_samples: int = 257, n_s: int = 33) -> float:
    """Sampled upper bound B on the optimal cost, uniform over t <= delta and |x - x*| <= delta*.

    Variants: ``cv_convex_S`` (straight line to a target xi* with finite g; identity
    dynamics, full control space), ``zero_control`` (0 in the cone), ``full_state``
    (constant control u* in the cone).
    """
    model = problem.lagrangian
    T = problem.T
    n = problem.n
    x_star = np.atleast_1d(np.asarray(problem.x if x_star is None else x_star, dtype=float))
    g = problem.terminal_cost
    ts = time_points(T, n_s)
    if variant == "zero_control":
        if not problem.control_cone(np.zeros(problem.m)):
            raise VariantInapplicable("0 is not in the control cone")
        xs = x_star + ball_points(n, float(delta_star), n_samples)
        best = -math.inf
        for x in xs:
            lam = model.eval(ts, np.broadcast_to(x, (ts.size, n)), np.zeros((ts.size, problem.m)))
            best = max(best, T * float(np.max(lam)) + g(x))
        return best
    if variant == "cv_convex_S":
        if problem.b is not None:
            raise VariantInapplicable("needs identity dynamics")
        if xi_star is None:
            raise VariantInapplicable("needs a target xi* with finite terminal cost")
        xi_star = np.atleast_1d(np.asarray(xi_star, dtype=float))
        g_xi = g(xi_star)
        if not math.isfinite(g_xi):
            raise VariantInapplicable("g(xi*) must be finite")
        dirs = sphere_directions(problem.m, 64, 4)
        if not all(problem.control_cone(v) for v in dirs):
            raise VariantInapplicable("needs the full control space")
        rz = float(np.linalg.norm(xi_star - x_star)) + delta_star
        rv = rz / (T - delta)
        zs = ball_points(n, rz, n_samples)
        vs = ball_points(problem.m, rv, n_samples)
        best = -math.inf
        for s in ts:
            lam = model.eval(s, zs[:, None, :], vs[None, :, :])
            best = max(best, float(np.max(lam)))
        return T * best + g_xi
    if variant == "full_state":
        if u_star is None:
            raise VariantInapplicable("needs a control u* in the cone")
        u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
        if not problem.control_cone(u_star):
            raise VariantInapplicable("u* is not in the control cone")
        speed = float(np.linalg.norm(u_star))
        # Gronwall radius for y' = b(y) u* started in the delta*-ball
        radius = delta_star + problem.theta * speed * T * (float(np.linalg.norm(x_star)) + delta_star + 1) \
            * math.exp(problem.theta * speed * T)
        pts = x_star + ball_points(n, radius, n_samples)
        best_l = -math.inf
        for s in ts:
            lam = model.eval(s, pts, np.broadcast_to(u_star, (pts.shape[0], problem.m)))
            best_l = max(best_l, float(np.max(lam)))
        best_g = max(g(z) for z in pts)
        return T * best_l + best_g
    raise VariantInapplicable(f"unknown variant {variant!r}", known=list(UNIFORM_B_VARIANTS))
