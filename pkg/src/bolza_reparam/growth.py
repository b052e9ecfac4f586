"""Verdicts for superlinearity and the growth conditions G, H and M.

Every verdict is one of Holds, Fails or Inconclusive.  Sampled sups and
infs cannot prove a limit, so the engines look for threshold crossings on
fixed ladders and report the numbers they used.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import BoundsContext, make_context, upsilon_table, xi_profile
from .errors import NoStructure
from .lagrangian import LagrangianModel, Structure, resolve_model
from .sampling import SamplerConfig, magnitudes_below, profile, sphere_directions

NU_LADDER = tuple(2.0 ** k for k in range(11))          # 1 .. 1024
G_THRESHOLDS = (-1.0, -10.0, -100.0)
MARGIN_TOL = 1e-9
STABILITY_RTOL = 0.1
# sampled values beyond this size are read as unbounded, not as finite numbers
UNBOUNDED_CAP = 1e12


class Verdict(str, enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


class Condition(str, enum.Enum):
    SUPERLINEAR = "Superlinear"
    G = "G"
    H = "H"
    M = "M"


@dataclass(frozen=True)
class Witnesses:
    nu_bar: float
    c: float
    rho_bar: Optional[float]
    Xi_at_nu_bar: float
    Upsilon_at_rho: float
    margin: float
    rhos: tuple = ()

    def to_dict(self) -> dict:
        return {
            "nu_bar": self.nu_bar, "c": self.c, "rho_bar": self.rho_bar, "rhos": list(self.rhos),
            "Xi_at_nu_bar": self.Xi_at_nu_bar, "Upsilon_at_rho": self.Upsilon_at_rho, "margin": self.margin,
        }


@dataclass(frozen=True)
class GrowthCertificate:
    """A verdict with the witnesses and the sampled table behind it.

    ``xi_ladder`` keeps the sampled Xi values on the nu ladder and
    ``candidates`` every passing (c, nu_bar), so the reparametrization can
    choose among them without resampling.
    """

    condition: Condition
    verdict: Verdict
    witnesses: Optional[Witnesses] = None
    context: Optional[BoundsContext] = None
    notes: str = ""
    table: tuple = ()
    xi_ladder: tuple = ()
    model_name: str = ""
    candidates: tuple = ()        # every passing (c, nu_bar, Xi(nu_bar), Upsilon(c))

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.value,
            "verdict": self.verdict.value,
            "model": self.model_name,
            "witnesses": self.witnesses.to_dict() if self.witnesses else None,
            "context": self.context.to_dict() if self.context else None,
            "notes": self.notes,
            "table": [dict(row) for row in self.table],
        }


@dataclass(frozen=True)
class SuperlinearityEstimate:
    theta_samples: tuple          # ((r, min Lambda on |u| = r), ...)
    ratio_trend: float
    verdict: Verdict

    def to_dict(self) -> dict:
        return {
            "condition": Condition.SUPERLINEAR.value,
            "verdict": self.verdict.value,
            "theta_samples": [list(p) for p in self.theta_samples],
            "ratio_trend": self.ratio_trend,
        }


def _require_structure(model: LagrangianModel):
    if not model.has_structure and model.P is None:
        raise NoStructure(f"model {model.name!r} has neither Q nor D_u")


# -- superlinearity -------------------------------------------------------------------


def check_superlinearity(model: LagrangianModel, K: float = 1.0, sampler: SamplerConfig | None = None, *,
                         T: float = 1.0, n: int | None = None, cone: Callable | None = None) -> SuperlinearityEstimate:
    """Theta(r) = sampled min of Lambda on |u| = r at the decades up to u_max.

    Holds when Theta(r)/r grows by a factor of at least 2 over the last two
    decades; Inconclusive otherwise.
    """
    cfg = sampler or SamplerConfig()
    top = int(math.floor(math.log10(cfg.u_max) + 1e-9))
    radii = 10.0 ** np.arange(0, top + 1)
    prof = profile(model, radii, T=T, K=K, n=int(n or model.n or model.m), config=cfg, quantity="L",
                   reduce="min", cone=cone)
    theta = np.where(prof.counts[0] > 0, prof.values[0], math.inf)
    ratio = theta / radii
    samples = tuple((float(r), float(v)) for r, v in zip(radii, theta))
    with np.errstate(all="ignore"):
        trend = float(np.log10(ratio[-1] / ratio[-2])) if ratio.size >= 2 else math.nan
    holds = ratio.size >= 3 and (ratio[-1] >= 2 * ratio[-3] or (math.isinf(ratio[-1]) and ratio[-1] > 0))
    return SuperlinearityEstimate(samples, trend, Verdict.HOLDS if holds else Verdict.INCONCLUSIVE)


# -- condition G ----------------------------------------------------------------------


def check_G(model: LagrangianModel, K: float = 1.0, sampler: SamplerConfig | None = None, *, T: float = 1.0,
            n: int | None = None, cone: Callable | None = None, ladder: Sequence[float] = NU_LADDER,
            thresholds: Sequence[float] = G_THRESHOLDS) -> GrowthCertificate:
    """Xi(nu) on a doubling ladder against fixed negative thresholds.

    Holds when every threshold is crossed on the ladder, Fails when the last
    rungs settle above the lowest threshold, Inconclusive otherwise.  An
    empty sample set counts as Xi = -inf.
    """
    _require_structure(model)
    prof = xi_profile(model, K, ladder, sampler, T=T, n=n, cone=cone)
    nus = sorted(prof)
    vals = [prof[v].value for v in nus]
    rows = tuple({"nu": nu, "Xi": v, "samples": prof[nu].sample_count} for nu, v in zip(nus, vals))
    crossed = {M: next((nu for nu, v in zip(nus, vals) if v < M), None) for M in thresholds}
    ladder_pairs = tuple((nu, v) for nu, v in zip(nus, vals))
    if all(c is not None for c in crossed.values()):
        note = "; ".join(f"Xi < {M:g} from nu = {nu:g}" for M, nu in crossed.items())
        return GrowthCertificate(Condition.G, Verdict.HOLDS, notes=note, table=rows, xi_ladder=ladder_pairs,
                                 model_name=model.name)
    last, prev = vals[-1], vals[-2]
    stable = math.isfinite(last) and abs(last - prev) <= 1e-2 * (1 + abs(last))
    if stable:
        return GrowthCertificate(Condition.G, Verdict.FAILS, table=rows, xi_ladder=ladder_pairs,
                                 notes=f"Xi settles near {last:.6g} on the last rungs", model_name=model.name)
    return GrowthCertificate(Condition.G, Verdict.INCONCLUSIVE, table=rows, xi_ladder=ladder_pairs,
                             notes="thresholds not all crossed and the ladder is still moving",
                             model_name=model.name)


# -- conditions H and M -----------------------------------------------------------------


def c_ladder(c_delta: float, steps: int = 8, low: float = 1.01, high: float = 100.0) -> np.ndarray:
    """Geometric ladder of c values from low*c_delta to high*c_delta."""
    base = c_delta if c_delta > 0 else 1e-2
    return np.geomspace(low * base, high * base, steps)


def rho_bar_for(model: LagrangianModel, c: float, K: float, sampler: SamplerConfig | None = None, *,
                T: float = 1.0, n: int | None = None, cone: Callable | None = None, depth: int = 30):
    """First rho in 1, 1/2, 1/4, ... whose Upsilon sample set is nonempty (None for real-valued models)."""
    if not model.is_extended:
        return None
    cfg = sampler or SamplerConfig()
    rhos = [2.0 ** -k for k in range(depth + 1)]
    prof = profile(model, magnitudes_below(c, cfg.n_mag), T=T, K=K, n=int(n or model.n or model.m), config=cfg,
                   quantity="P", reduce="min", dist_min=rhos, cone=cone)
    for f, rho in enumerate(rhos):
        if prof.counts[f].sum() > 0:
            return rho
    return None


def nu_lower_bound(ctx: BoundsContext, c: float, nu_bar: float) -> float:
    """max(nu_bar, c, R / ((1 - mu0) m0 (T - delta))) with the midpoint choices of mu0 and Delta."""
    x = ctx.c_delta_B / c
    room = (1 - x) ** 2 / (4 * (1 + x))     # (1 - mu0) m0 at mu = mu0
    return max(nu_bar, c, ctx.R / (room * (ctx.T - ctx.delta)))


def _sweep(model, ctx, K, sampler, *, n, cone, c_steps, nu_ladder):
    cfg = sampler or SamplerConfig()
    cs = [float(c) for c in c_ladder(ctx.c_delta_B, c_steps)]
    rho_bar = rho_bar_for(model, cs[0], K, cfg, T=ctx.T, n=n, cone=cone)
    rhos = (None,) if rho_bar is None else (rho_bar, rho_bar / 2, rho_bar / 4)
    ups = upsilon_table(model, K, cs, rhos, cfg, T=ctx.T, n=n, cone=cone)
    xis = xi_profile(model, K, nu_ladder, cfg, T=ctx.T, n=n, cone=cone)
    return cs, rho_bar, rhos, ups, xis


def check_H(model: LagrangianModel, ctx: BoundsContext, K: float | None = None,
            sampler: SamplerConfig | None = None, *, n: int | None = None, cone: Callable | None = None,
            c_steps: int = 8, nu_ladder: Sequence[float] = NU_LADDER,
            margin_tol: float = MARGIN_TOL) -> GrowthCertificate:
    """Search (c, nu_bar) for Upsilon(c, rho) - Xi(nu_bar) - 2 Phi(B) > margin_tol at every tested rho.

    Among the passing pairs the witness is the one with the smallest lower
    bound on the reparametrization's nu.
    """
    _require_structure(model)
    K = ctx.K if K is None else K
    cs, rho_bar, rhos, ups, xis = _sweep(model, ctx, K, sampler, n=n, cone=cone, c_steps=c_steps,
                                         nu_ladder=nu_ladder)
    two_phi = 2 * ctx.phi_B
    rows, passing = [], []
    any_finite = False
    for c in cs:
        upsilons = [ups[(c, r)] for r in rhos]
        for nu in sorted(xis):
            xi = xis[nu]
            if xi.empty or any(u.empty for u in upsilons):
                rows.append({"c": c, "nu_bar": nu, "margin": None, "status": "empty"})
                continue
            any_finite = True
            worst = min(u.value for u in upsilons)
            margin = worst - xi.value - two_phi
            rows.append({"c": c, "nu_bar": nu, "Xi": xi.value, "Upsilon": worst, "margin": margin})
            if margin > margin_tol:
                passing.append((nu_lower_bound(ctx, c, nu), c, nu, xi.value, worst, margin))
    ladder = tuple((nu, xis[nu].value) for nu in sorted(xis))
    if passing:
        _, c, nu, xi, ups_v, margin = min(passing)
        w = Witnesses(nu, c, rho_bar, xi, ups_v, margin, tuple(r for r in rhos if r is not None))
        cands = tuple((p[1], p[2], p[3], p[4]) for p in passing)
        return GrowthCertificate(Condition.H, Verdict.HOLDS, w, ctx, f"{len(passing)} passing (c, nu_bar) pairs",
                                 tuple(rows), ladder, model.name, cands)
    verdict = Verdict.FAILS if any_finite else Verdict.INCONCLUSIVE
    note = "margin never positive on the ladder" if any_finite else "empty sample sets only"
    return GrowthCertificate(Condition.H, verdict, None, ctx, note, tuple(rows), ladder, model.name)


def h_margin(model: LagrangianModel, ctx: BoundsContext, c: float, nu_bar: float, rhos=(None,),
             K: float | None = None, sampler: SamplerConfig | None = None, *, n: int | None = None,
             cone: Callable | None = None) -> float:
    """The margin of the H inequality at one (c, nu_bar), worst over ``rhos``."""
    K = ctx.K if K is None else K
    ups = upsilon_table(model, K, [c], list(rhos), sampler, T=ctx.T, n=n, cone=cone)
    xi = xi_profile(model, K, [nu_bar], sampler, T=ctx.T, n=n, cone=cone)[float(nu_bar)]
    worst = min(ups[(float(c), r)].value for r in rhos)
    return worst - xi.value - 2 * ctx.phi_B


def _stable(a: float, b: float) -> bool:
    bounded = abs(a) < UNBOUNDED_CAP and abs(b) < UNBOUNDED_CAP
    return bounded and abs(a - b) <= STABILITY_RTOL * (1 + abs(a))


def check_M(model: LagrangianModel, ctx: BoundsContext, K: float | None = None,
            sampler: SamplerConfig | None = None, *, n: int | None = None, cone: Callable | None = None,
            c_steps: int = 8, nu_ladder: Sequence[float] = NU_LADDER) -> GrowthCertificate:
    """Holds when Upsilon and Xi are finite and stable under one sample refinement."""
    _require_structure(model)
    cfg = sampler or SamplerConfig()
    K = ctx.K if K is None else K
    cs, rho_bar, rhos, ups, xis = _sweep(model, ctx, K, cfg, n=n, cone=cone, c_steps=c_steps, nu_ladder=nu_ladder)
    fine = cfg.refined()
    ups_f = upsilon_table(model, K, cs, rhos, fine, T=ctx.T, n=n, cone=cone)
    xis_f = xi_profile(model, K, nu_ladder, fine, T=ctx.T, n=n, cone=cone)

    def merged(base, ref, kind):
        if base.empty:
            return ref.value
        if ref.empty:
            return base.value
        return max(base.value, ref.value) if kind == "sup" else min(base.value, ref.value)

    ok_nu = []
    rows = []
    for nu in sorted(xis):
        a, b = xis[nu], merged(xis[nu], xis_f[nu], "sup")
        good = not a.empty and _stable(a.value, b)
        rows.append({"nu_bar": nu, "Xi": a.value, "Xi_refined": b, "stable": good})
        if good:
            ok_nu.append((nu, b))
    ok_c = []
    for c in cs:
        vals = []
        good = True
        for r in rhos:
            a, b = ups[(c, r)], merged(ups[(c, r)], ups_f[(c, r)], "inf")
            good = good and not a.empty and _stable(a.value, b)
            vals.append(b)
            rows.append({"c": c, "rho": r, "Upsilon": a.value, "Upsilon_refined": b, "stable": good})
        if good:
            ok_c.append((c, min(vals)))
    ladder = tuple((nu, merged(xis[nu], xis_f[nu], "sup")) for nu in sorted(xis))
    if ok_nu and ok_c:
        best = min((nu_lower_bound(ctx, c, nu), c, nu, xv, uv) for c, uv in ok_c for nu, xv in ok_nu)
        _, c, nu, xv, uv = best
        w = Witnesses(nu, c, rho_bar, xv, uv, uv - xv - 2 * ctx.phi_B, tuple(r for r in rhos if r is not None))
        cands = tuple((c, nu, xv, uv) for c, uv in ok_c for nu, xv in ok_nu)
        return GrowthCertificate(Condition.M, Verdict.HOLDS, w, ctx, "Xi and Upsilon finite and stable",
                                 tuple(rows), ladder, model.name, cands)
    parts = []
    if not ok_c:
        parts.append("inf over small controls unbounded or unstable (i)")
    if not ok_nu:
        parts.append("sup over large controls unbounded or unstable (ii)")
    return GrowthCertificate(Condition.M, Verdict.FAILS, None, ctx, "; ".join(parts), tuple(rows), ladder,
                             model.name)


# -- implications -------------------------------------------------------------------------


def ball_in_domain(model: LagrangianModel, radius: float = 1e-2, K: float = 1.0, T: float = 1.0) -> bool:
    """Sampled check that a small ball around u = 0 lies in the domain."""
    dirs = sphere_directions(model.m, 64, 0)
    n = int(model.n or model.m)
    pts = np.concatenate([[np.zeros(model.m)], radius * dirs])
    vals = model.eval(np.zeros(len(pts)), np.zeros((len(pts), n)), pts)
    return bool(np.all(np.isfinite(vals)))


@dataclass
class ImplicationReport:
    verdicts: dict = field(default_factory=dict)      # model -> {condition: verdict}
    checks: list = field(default_factory=list)        # dicts: model, implication, applies, consistent

    @property
    def violations(self) -> list:
        return [c for c in self.checks if c["applies"] and not c["consistent"]]

    def to_dict(self) -> dict:
        return {"verdicts": self.verdicts, "checks": self.checks}


def cross_check_implications(models, *, B: float = 1.0, delta: float = 0.0, sampler: SamplerConfig | None = None,
                             verdicts: dict | None = None) -> ImplicationReport:
    """Check Superlinear => G => H => M on each model where the side conditions apply.

    ``verdicts`` may supply precomputed ``{name: {condition: verdict}}`` entries.
    A violated implication is reported as a sampler deficiency.
    """
    report = ImplicationReport()
    given = verdicts or {}
    for spec in models:
        model = resolve_model(spec)
        v = dict(given.get(model.name, {}))
        ctx = make_context(model, T=1.0, B=B, delta=delta)
        if "Superlinear" not in v:
            v["Superlinear"] = check_superlinearity(model, ctx.K, sampler).verdict.value
        if "G" not in v:
            v["G"] = check_G(model, ctx.K, sampler).verdict.value
        if "H" not in v:
            v["H"] = check_H(model, ctx, sampler=sampler).verdict.value
        if "M" not in v:
            v["M"] = check_M(model, ctx, sampler=sampler).verdict.value
        report.verdicts[model.name] = v
        radial = model.structure in (Structure.RADIALLY_CONVEX, Structure.BOTH)
        rules = [
            ("Superlinear => G", v["Superlinear"] == "Holds" and radial and ball_in_domain(model), v["G"]),
            ("G => H", v["G"] == "Holds" and model.bounded_on_bounded, v["H"]),
            ("H => M", v["H"] == "Holds", v["M"]),
        ]
        for name, applies, conclusion in rules:
            report.checks.append({"model": model.name, "implication": name, "applies": bool(applies),
                                  "consistent": (not applies) or conclusion == "Holds"})
    return report
