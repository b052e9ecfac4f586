"""Lagrangian models, radial subgradients and the built-in catalog.

A model evaluates ``Lambda(s, y, u)`` with numpy broadcasting: ``s`` has
some shape ``S``, ``y`` has shape ``S + (n,)`` and ``u`` has shape
``S + (m,)`` (after broadcasting).  Values outside the effective domain
are ``+inf``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainEdge, NoStructure, NotFound, UnknownName
from .expr import Expression


class Structure(str, enum.Enum):
    RADIALLY_CONVEX = "RadiallyConvex"
    PARTIALLY_DIFFERENTIABLE = "PartiallyDifferentiable"
    BOTH = "Both"


@dataclass(frozen=True)
class ConditionSData:
    """Constants of the time-regularity condition.

    ``gamma`` is piecewise constant: ``gamma_values[k]`` on
    ``[gamma_breaks[k-1], gamma_breaks[k])``.  ``eps_star=None`` means the
    whole horizon.
    """

    kappa: float = 0.0
    A: float = 0.0
    gamma_values: tuple = (0.0,)
    gamma_breaks: tuple = ()
    eps_star: Optional[float] = None

    def __post_init__(self):
        if self.kappa < 0 or self.A < 0 or min(self.gamma_values) < 0:
            raise ValueError("kappa, A and gamma must be nonnegative")
        if len(self.gamma_values) != len(self.gamma_breaks) + 1:
            raise ValueError("gamma needs one more value than breakpoints")

    @classmethod
    def constant(cls, kappa=0.0, A=0.0, gamma=0.0, eps_star=None) -> "ConditionSData":
        return cls(float(kappa), float(A), (float(gamma),), (), eps_star)

    @property
    def is_autonomous(self) -> bool:
        return self.kappa == 0 and self.A == 0 and max(self.gamma_values) == 0

    def gamma(self, s):
        idx = np.searchsorted(np.asarray(self.gamma_breaks, dtype=float), s, side="right")
        return np.asarray(self.gamma_values, dtype=float)[idx]

    def gamma_l1(self, T: float) -> float:
        edges = [0.0] + [b for b in self.gamma_breaks if 0.0 < b < T] + [T]
        return math.fsum(float(self.gamma((a + b) / 2)) * (b - a) for a, b in zip(edges[:-1], edges[1:]))

    def eps(self, T: float) -> float:
        return T if self.eps_star is None else float(self.eps_star)


def _split(s, y, u):
    return np.asarray(s, dtype=float), np.asarray(y, dtype=float), np.asarray(u, dtype=float)


@dataclass(frozen=True)
class LagrangianModel:
    """An extended-valued Lagrangian with its radial structure.

    ``func`` returns Lambda (``+inf`` off the domain).  ``Q`` is a selection
    of the radial subdifferential at r = 1 and ``D_u`` the radial
    derivative ``u . grad_u Lambda``; at least one is needed for growth
    checks.
    """

    name: str
    m: int
    func: Callable
    Q: Optional[Callable] = None
    D_u: Optional[Callable] = None
    P: Optional[Callable] = None
    domain: Optional[Callable] = None
    dist: Optional[Callable] = None
    structure: Structure = Structure.RADIALLY_CONVEX
    condition_s: ConditionSData = field(default_factory=ConditionSData)
    linear_growth: tuple = (1.0, 0.0)
    n: Optional[int] = None
    domain_is_product: bool = True
    blows_up_at_boundary: bool = False
    uses_s: bool = False
    uses_y: bool = False
    kinks: Optional[Callable] = None
    closed_forms: dict = field(default_factory=dict)
    nonnegative: bool = True
    bounded_on_bounded: bool = True
    q_source: str = "analytic"
    params: dict = field(default_factory=dict)

    # -- evaluation ------------------------------------------------------------

    def eval(self, s, y, u):
        s, y, u = _split(s, y, u)
        with np.errstate(all="ignore"):
            val = np.asarray(self.func(s, y, u), dtype=float)
            if self.domain is not None:
                val = np.where(self.domain(s, y, u), val, np.inf)
        return val

    def in_domain(self, s, y, u):
        return np.isfinite(self.eval(s, y, u))

    def dist_to_boundary(self, s, y, u):
        s, y, u = _split(s, y, u)
        if self.dist is None:
            shape = np.broadcast_shapes(s.shape, y.shape[:-1], u.shape[:-1])
            return np.full(shape, np.inf)
        return np.asarray(self.dist(s, y, u), dtype=float)

    @property
    def is_extended(self) -> bool:
        return self.dist is not None

    @property
    def has_structure(self) -> bool:
        return self.Q is not None or self.D_u is not None

    def radial_slope(self, s, y, u):
        """Q if available, otherwise D_u (the two agree where both exist)."""
        s, y, u = _split(s, y, u)
        fn = self.Q if self.Q is not None else self.D_u
        if fn is None:
            raise NoStructure(f"model {self.name!r} has neither Q nor D_u")
        with np.errstate(all="ignore"):
            return np.asarray(fn(s, y, u), dtype=float)

    def intercept(self, s, y, u, lam=None):
        """P = Lambda - Q, the intercept of the radial tangent line.

        Uses the model's closed-form P when given (it avoids cancellation for
        large |u|); ``lam`` may pass precomputed Lambda values.
        """
        if lam is None:
            lam = self.eval(s, y, u)
        with np.errstate(all="ignore"):
            if self.P is not None:
                s, y, u = _split(s, y, u)
                return np.where(np.isfinite(lam), np.asarray(self.P(s, y, u), dtype=float), np.nan)
            return lam - self.radial_slope(s, y, u)

    def with_params(self, **changes) -> "LagrangianModel":
        return dataclasses.replace(self, **changes)


def radial_intercept(model: LagrangianModel, s, y, u):
    """P(s, y, u) = Lambda - Q (radially convex) or Lambda - D_u Lambda (differentiable)."""
    if not model.has_structure and model.P is None:
        raise NoStructure(f"model {model.name!r} has neither Q nor D_u")
    out = model.intercept(s, y, u)
    return float(out) if np.ndim(out) == 0 else out


def numeric_Q(model: LagrangianModel, s, y, u, h: float | None = None) -> float:
    """Central difference of r -> Lambda(s, y, r u) at r = 1.

    Raises DomainEdge when (1 + h) u leaves the domain.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = float(np.linalg.norm(u))
    if r == 0.0:
        return 0.0
    if h is None:
        h = 1e-6 * max(1.0, r) / r
    up = float(model.eval(s, y, (1 + h) * u))
    down = float(model.eval(s, y, (1 - h) * u))
    if not math.isfinite(up):
        raise DomainEdge("(1+h)u leaves the domain", h=h)
    if not math.isfinite(down):
        raise DomainEdge("(1-h)u leaves the domain", h=h)
    return (up - down) / (2 * h)


def numeric_Q_robust(model: LagrangianModel, s, y, u, h: float | None = None, tries: int = 20) -> float:
    """numeric_Q with step halving, then a backward difference near the boundary."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r = float(np.linalg.norm(u))
    if r == 0.0:
        return 0.0
    h = 1e-6 * max(1.0, r) / r if h is None else h
    for _ in range(tries):
        try:
            return numeric_Q(model, s, y, u, h)
        except DomainEdge:
            h /= 2
    base = float(model.eval(s, y, u))
    down = float(model.eval(s, y, (1 - h) * u))
    return (base - down) / h


def _numeric_Q_array(func: Callable, h_rel: float = 1e-6) -> Callable:
    """Vectorized central slope with a backward difference where the forward point is infinite."""

    def q(s, y, u):
        r = np.linalg.norm(u, axis=-1)
        h = h_rel * np.maximum(1.0, r) / np.where(r > 0, r, 1.0)
        hh = h[..., None]
        up = np.asarray(func(s, y, (1 + hh) * u), dtype=float)
        mid = np.asarray(func(s, y, u), dtype=float)
        down = np.asarray(func(s, y, (1 - hh) * u), dtype=float)
        central = (up - down) / (2 * h)
        backward = (mid - down) / h
        out = np.where(np.isfinite(up), central, backward)
        return np.where(r > 0, out, 0.0)

    return q


def derive_condition_S_from_proximal(beta: float, T: float) -> ConditionSData:
    """Condition (S) constants from a proximal-type bound with parameter beta.

    beta = 0 gives the autonomous data; otherwise kappa = A = gamma = beta'
    with beta' = (e^{2 beta T} + 1)(e^{2 beta T} - 1) / (2T) and eps* = T.
    """
    if beta < 0 or T <= 0:
        raise ValueError("need beta >= 0 and T > 0")
    if beta == 0:
        return ConditionSData.constant(eps_star=T)
    e = math.exp(2 * beta * T)
    bp = (e + 1) * math.expm1(2 * beta * T) / (2 * T)
    return ConditionSData.constant(bp, bp, bp, eps_star=T)


def extract_linear_growth_from_G(model: LagrangianModel, K: float = 1.0, search_config=None,
                                 T: float = 1.0, n: int | None = None, R_max: float = 2.0 ** 20):
    """Find R with Q - Lambda >= 1 on sampled |w| >= R; returns (1/R, 2).

    Raises NotFound when doubling R up to R_max never works.
    """
    from .sampling import SamplerConfig, magnitudes_at_least, profile

    cfg = search_config or SamplerConfig()
    n = n or model.n or model.m
    R = 1.0
    while R <= R_max:
        mags = magnitudes_at_least(R, max(cfg.u_max, 2 * R), cfg.n_mag)
        prof = profile(model, mags, T=T, K=K, n=n, config=cfg, quantity="P", reduce="max")
        if prof.counts.sum() == 0:
            return 1.0 / R, 2.0
        # Q - Lambda >= 1  <=>  P <= -1
        if float(prof.values.max()) <= -1.0:
            return 1.0 / R, 2.0
        R *= 2
    raise NotFound("no radius R found for the linear growth bound", R_max=R_max)


# -- built-in catalog -----------------------------------------------------------


def _norm(u):
    return np.linalg.norm(u, axis=-1)


def _minimal_length(m: int = 1) -> LagrangianModel:
    def f(s, y, u):
        r2 = np.sum(u * u, axis=-1)
        return np.sqrt(1 + r2)

    def q(s, y, u):
        r2 = np.sum(u * u, axis=-1)
        return r2 / np.sqrt(1 + r2)

    def p(s, y, u):
        return 1 / np.sqrt(1 + np.sum(u * u, axis=-1))

    return LagrangianModel(
        name="minimal_length", m=m, func=f, Q=q, D_u=q, P=p, structure=Structure.BOTH,
        linear_growth=(1.0, 0.0),
        closed_forms={
            "Xi": lambda nu, **_: 1 / math.sqrt(1 + nu * nu),
            "Upsilon": lambda c, **_: 1 / math.sqrt(1 + c * c),
        },
        params={"m": m},
    )


def _discont_surface(lam: float = 0.01) -> LagrangianModel:
    """phi(s) a(y) sqrt(1+|u|^2) with phi(s) = 1 + lam*s and a(y) = 1 + [y_1 > 0]."""
    m_phi = 1.0

    def weight(s, y):
        return (1 + lam * s) * (1 + (y[..., 0] > 0))

    def f(s, y, u):
        return weight(s, y) * np.sqrt(1 + np.sum(u * u, axis=-1))

    def q(s, y, u):
        r2 = np.sum(u * u, axis=-1)
        return weight(s, y) * r2 / np.sqrt(1 + r2)

    def p(s, y, u):
        return weight(s, y) / np.sqrt(1 + np.sum(u * u, axis=-1))

    def kinks(s0, s1, y0, y1, u):
        a, b = float(y0[0]), float(y1[0])
        if (a > 0) != (b > 0) and a != b:
            return [s0 + (s1 - s0) * a / (a - b)]
        return []

    return LagrangianModel(
        name="discont_surface", m=2, n=2, func=f, Q=q, D_u=q, P=p, structure=Structure.BOTH,
        condition_s=ConditionSData.constant(kappa=abs(lam) / m_phi),
        linear_growth=(m_phi, 0.0), uses_s=lam != 0, uses_y=True, kinks=kinks,
        closed_forms={
            "Xi": lambda nu, T=1.0, **_: 2 * max(1.0, 1 + lam * T) / math.sqrt(1 + nu * nu),
            "Upsilon": lambda c, **_: m_phi / math.sqrt(1 + c * c),
        },
        params={"lam": lam, "m_phi": m_phi},
    )


def _hnew_1d() -> LagrangianModel:
    def f(s, y, u):
        v = u[..., 0]
        neg = 1.0 / (1.0 - v * v)
        return np.where(v <= -1, np.inf, np.where(v <= 0, neg, v * v + 1))

    def q(s, y, u):
        v = u[..., 0]
        neg = 2 * v * v / (1 - v * v) ** 2
        return np.where(v <= -1, np.nan, np.where(v <= 0, neg, 2 * v * v))

    def p(s, y, u):
        v = u[..., 0]
        neg = (1 - 3 * v * v) / (v * v - 1) ** 2
        return np.where(v <= -1, np.nan, np.where(v < 0, neg, 1 - v * v))

    def dist(s, y, u):
        return np.where(u[..., 0] > -1, u[..., 0] + 1, 0.0)

    return LagrangianModel(
        name="hnew_1d", m=1, func=f, Q=q, D_u=q, P=p, dist=dist, structure=Structure.BOTH,
        linear_growth=(2.0, 0.0), blows_up_at_boundary=True,
    )


def _g_not_h() -> LagrangianModel:
    def wedge(u):
        return (u[..., 0] > 0) & (u[..., 0] <= u[..., 1])

    def f(s, y, u):
        r2 = np.sum(u * u, axis=-1)
        with np.errstate(all="ignore"):
            w = r2 * u[..., 1] / u[..., 0]
        return np.where(wedge(u), w, r2)

    def q(s, y, u):
        return 2 * f(s, y, u)

    def p(s, y, u):
        return -f(s, y, u)

    return LagrangianModel(
        name="g_not_h", m=2, func=f, Q=q, P=p, structure=Structure.RADIALLY_CONVEX,
        linear_growth=(1.0, 0.25), bounded_on_bounded=False,
    )


def _radial_concave() -> LagrangianModel:
    def f(s, y, u):
        v = u[..., 0]
        return 2 * np.abs(v) - np.sqrt(1 + v * v)

    def du(s, y, u):
        v = u[..., 0]
        return 2 * np.abs(v) - v * v / np.sqrt(1 + v * v)

    def p(s, y, u):
        return -1 / np.sqrt(1 + u[..., 0] ** 2)

    return LagrangianModel(
        name="radial_concave", m=1, func=f, D_u=du, P=p, structure=Structure.PARTIALLY_DIFFERENTIABLE,
        linear_growth=(1.0, 1.0), nonnegative=False,
        closed_forms={"Xi": lambda nu, **_: 0.0, "Upsilon": lambda c, **_: -1.0},
    )


_SQRT_HALF = math.sqrt(0.5)


def _star_domain_region(u):
    u1, u2 = u[..., 0], u[..., 1]
    a1 = np.abs(u1)
    q = u1 * u1 + u2 * u2
    r1 = (u2 <= a1) & (q < 1)
    with np.errstate(all="ignore"):
        r2 = (u2 > a1) & (a1 <= _SQRT_HALF) & ((a1 == 0) | (u2 * a1 < 0.5))
    return r1, r2, q, a1 * u2


def _hyperbola_distance(a, b):
    """Distance from (a, b) to the branch x -> 1/(2x), x in (0, 1/sqrt 2]."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    # stationarity: 4x^4 - 4a x^3 + 2b x - 1 = 0
    n = a.size
    comp = np.zeros((n, 4, 4))
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    comp[:, 0, 0] = a          # -(-4a)/4
    comp[:, 0, 1] = 0.0
    comp[:, 0, 2] = -b / 2.0   # -(2b)/4
    comp[:, 0, 3] = 0.25       # -(-1)/4
    roots = np.linalg.eigvals(comp)
    x = roots.real
    good = (np.abs(roots.imag) <= 1e-9 * (1 + np.abs(x))) & (x > 0) & (x <= _SQRT_HALF)
    xe = _SQRT_HALF
    best = np.hypot(a - xe, b - 0.5 / xe)
    with np.errstate(all="ignore"):
        d = np.hypot(a[:, None] - x, b[:, None] - 0.5 / x)
    d = np.where(good, d, np.inf)
    return np.minimum(best, d.min(axis=1))


def _arc_distance(u1, u2):
    """Distance to the unit-circle arc {u2 <= |u1|} (angles from 3pi/4 to 9pi/4)."""
    r = np.hypot(u1, u2)
    theta = np.mod(np.arctan2(u2, u1) - 3 * np.pi / 4, 2 * np.pi)
    on_arc = theta <= 1.5 * np.pi
    e1 = np.hypot(u1 - _SQRT_HALF, u2 - _SQRT_HALF)
    e2 = np.hypot(u1 + _SQRT_HALF, u2 - _SQRT_HALF)
    return np.where(on_arc, np.abs(1 - r), np.minimum(e1, e2))


def _extended_star() -> LagrangianModel:
    def f(s, y, u):
        r1, r2, q, w = _star_domain_region(u)
        with np.errstate(all="ignore"):
            v1 = 1 / (1 - q)
            v2 = q / (1 - 2 * w)
        return np.where(r1, v1, np.where(r2, v2, np.inf))

    def qf(s, y, u):
        r1, r2, q, w = _star_domain_region(u)
        with np.errstate(all="ignore"):
            v1 = 2 * q / (1 - q) ** 2
            v2 = 2 * q / (1 - 2 * w) ** 2
        return np.where(r1, v1, np.where(r2, v2, np.nan))

    def p(s, y, u):
        r1, r2, q, w = _star_domain_region(u)
        with np.errstate(all="ignore"):
            v1 = (1 - 3 * q) / (1 - q) ** 2
            v2 = -q * (1 + 2 * w) / (1 - 2 * w) ** 2
        return np.where(r1, v1, np.where(r2, v2, np.nan))

    def dist(s, y, u):
        u = np.asarray(u, dtype=float)
        shape = u.shape[:-1]
        flat = u.reshape(-1, 2)
        u1, u2 = flat[:, 0], flat[:, 1]
        d = _arc_distance(u1, u2)
        d = np.minimum(d, _hyperbola_distance(u1, u2))
        d = np.minimum(d, _hyperbola_distance(-u1, u2))
        r1, r2, _, _ = _star_domain_region(flat)
        d = np.where(r1 | r2, d, 0.0)
        full = np.broadcast_shapes(np.shape(s), np.shape(y)[:-1], shape)
        return np.broadcast_to(d.reshape(shape), full)

    return LagrangianModel(
        name="extended_star", m=2, func=f, Q=qf, P=p, dist=dist, structure=Structure.RADIALLY_CONVEX,
        linear_growth=(1.0, 0.25), blows_up_at_boundary=True,
    )


BUILTINS = {
    "minimal_length": _minimal_length,
    "discont_surface": _discont_surface,
    "hnew_1d": _hnew_1d,
    "g_not_h": _g_not_h,
    "radial_concave": _radial_concave,
    "extended_star": _extended_star,
}


def builtin(name: str, **params) -> LagrangianModel:
    """Return a catalog model by name."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownName(f"unknown built-in model {name!r}", known=sorted(BUILTINS)) from None
    return factory(**params)


# -- JSON descriptors -------------------------------------------------------------


def model_from_descriptor(desc: dict) -> LagrangianModel:
    """Build a model from ``{expr, domain_expr, Q_expr, dist_expr, structure, condition_s, linear_growth}``."""
    lam = Expression(desc["expr"])
    dom = Expression(desc["domain_expr"]) if desc.get("domain_expr") else None
    dist = Expression(desc["dist_expr"]) if desc.get("dist_expr") else None
    exprs = [e for e in (lam, dom, dist) if e is not None]
    m = int(desc.get("m") or max(1, max(e.max_index("u") for e in exprs)))
    n = desc.get("n") or max(e.max_index("y") for e in exprs) or None
    if m > 4 or (n or 0) > 4:
        raise ValueError("descriptor models support at most 4 state/control components")

    if dom is not None:
        def func(s, y, u):
            return np.where(dom(s, y, u) != 0, lam(s, y, u), np.inf)
    else:
        func = lam

    if desc.get("Q_expr"):
        qe = Expression(desc["Q_expr"])
        exprs.append(qe)
        q, source = (lambda s, y, u: qe(s, y, u)), "analytic"
    else:
        q, source = _numeric_Q_array(func), "numeric"

    cs = desc.get("condition_s") or {}
    condition = ConditionSData.constant(
        cs.get("kappa", 0.0), cs.get("A", 0.0), cs.get("gamma_const", 0.0), cs.get("eps_star"))
    lg = desc.get("linear_growth") or {}
    structure = Structure(desc.get("structure", "RadiallyConvex"))
    return LagrangianModel(
        name=desc.get("name", "custom"), m=m, n=n, func=func, Q=q, D_u=q if structure != Structure.RADIALLY_CONVEX else None,
        dist=(lambda s, y, u: dist(s, y, u)) if dist is not None else None,
        structure=structure, condition_s=condition,
        linear_growth=(float(lg.get("alpha", 1.0)), float(lg.get("d", 0.0))),
        blows_up_at_boundary=bool(desc.get("blows_up_at_boundary", False)),
        uses_s=any(e.uses_s for e in exprs), uses_y=any(e.uses_y for e in exprs),
        nonnegative=bool(desc.get("nonnegative", True)), q_source=source,
        params={"descriptor": desc},
    )


def resolve_model(spec) -> LagrangianModel:
    """Accept a model, a built-in name, a descriptor dict, or ``{"builtin": name, ...params}``."""
    if isinstance(spec, LagrangianModel):
        return spec
    if isinstance(spec, str):
        return builtin(spec)
    if isinstance(spec, dict):
        if "builtin" in spec:
            params = {k: v for k, v in spec.items() if k != "builtin"}
            return builtin(spec["builtin"], **params)
        return model_from_descriptor(spec)
    raise UnknownName(f"cannot interpret model specification {spec!r}")
