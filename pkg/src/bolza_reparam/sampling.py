"""Deterministic low-discrepancy sample sets and per-magnitude reductions.

Point sets are prefixes of unscrambled Halton sequences plus fixed grids,
so results are reproducible without a seed.  Refined estimates are merged
with the base ones, which keeps sampled sups nondecreasing and sampled
infs nonincreasing under refinement.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm, qmc


@dataclass(frozen=True)
class SamplerConfig:
    """Sample sizes for sup/inf estimation.

    Args:
        n_s: time samples on [0, T] (``2**k + 1`` keeps refinements nested).
        n_z: state samples in the ball of radius K.
        n_dir: Halton directions on the unit sphere of control space.
        n_mag: control magnitudes per query.
        u_max: largest magnitude for sups over ``|v| >= nu``.
        axis_depth: extra directions at angles ``2**-k`` from each coordinate axis.
        axis_depth_sy: the same depth for models that depend on s or y, where
            every direction is multiplied by the (s, z) grid.
        refine_u_max_factor: u_max multiplier applied by :meth:`refined`
            (which also doubles the counts and deepens the near-axis clusters).
        chunk: max number of points evaluated in one numpy call.
        use_closed_forms: let models with closed-form sup/inf bypass sampling.
    """

    n_s: int = 33
    n_z: int = 257
    n_dir: int = 64
    n_mag: int = 129
    u_max: float = 1e6
    axis_depth: int = 24
    axis_depth_sy: int = 4
    refine_u_max_factor: float = 1e3
    chunk: int = 1_000_000
    use_closed_forms: bool = False
    level: int = 0

    def refined(self) -> "SamplerConfig":
        return dataclasses.replace(
            self,
            n_s=2 * self.n_s - 1,
            n_z=2 * self.n_z,
            n_dir=2 * self.n_dir,
            n_mag=2 * self.n_mag - 1,
            u_max=self.u_max * self.refine_u_max_factor,
            axis_depth=2 * self.axis_depth,
            axis_depth_sy=2 * self.axis_depth_sy,
            level=self.level + 1,
        )

    def total_points(self, model, m: int) -> int:
        s = self.n_s if model.uses_s else 1
        z = self.n_z if model.uses_y else 1
        return s * z * len(sphere_directions(m, self.n_dir, self.depth_for(model))) * self.n_mag

    def depth_for(self, model) -> int:
        if model.uses_s or model.uses_y:
            return min(self.axis_depth, self.axis_depth_sy)
        return self.axis_depth


def thread_cap() -> int:
    """Parallelism cap from BOLZA_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("BOLZA_THREADS", "1")))
    except ValueError:
        return 1


@lru_cache(maxsize=64)
def _halton(d: int, count: int) -> np.ndarray:
    if count <= 0:
        return np.zeros((0, d))
    pts = qmc.Halton(d=d, scramble=False).random(count)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=64)
def sphere_directions(m: int, n_dir: int, axis_depth: int) -> np.ndarray:
    """Unit vectors: the axes, near-axis clusters, then Halton directions."""
    if m == 1:
        out = np.array([[1.0], [-1.0]])
        out.setflags(write=False)
        return out
    eye = np.eye(m)
    dirs = [eye[i] * sgn for i in range(m) for sgn in (1.0, -1.0)]
    for k in range(1, axis_depth + 1):
        a = 2.0 ** -k
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                for si in (1.0, -1.0):
                    for sj in (1.0, -1.0):
                        dirs.append(np.cos(a) * si * eye[i] + np.sin(a) * sj * eye[j])
    if m == 2:
        h = _halton(1, n_dir + 1)[1:, 0]
        ang = 2 * np.pi * h
        dirs.extend(np.column_stack([np.cos(ang), np.sin(ang)]))
    else:
        h = np.clip(_halton(m, n_dir + 1)[1:], 1e-9, 1 - 1e-9)
        g = norm.ppf(h)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        dirs.extend(g)
    out = np.array(dirs)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def ball_points(n: int, K: float, count: int) -> np.ndarray:
    """Origin, the 2n axis points of radius K, then Halton points mapped cube->ball."""
    anchors = [np.zeros(n)]
    for i in range(n):
        for sgn in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = sgn * K
            anchors.append(e)
    cube = 2.0 * _halton(n, count + 1)[1:] - 1.0
    inf_norm = np.abs(cube).max(axis=1, keepdims=True)
    two_norm = np.linalg.norm(cube, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        ball = np.where(two_norm > 0, cube * inf_norm / two_norm, 0.0) * K
    out = np.vstack([np.array(anchors), ball])
    out.setflags(write=False)
    return out


def time_points(T: float, n_s: int) -> np.ndarray:
    return np.linspace(0.0, T, n_s)


def magnitudes_at_least(nu: float, u_max: float, n_mag: int, extra: Sequence[float] = ()) -> np.ndarray:
    """Magnitudes in [nu, u_max], log-spaced, always containing nu itself."""
    if nu >= u_max:
        base = np.array([nu])
    else:
        base = np.geomspace(nu, u_max, n_mag)
        base[0] = nu
    return np.unique(np.concatenate([base, [m for m in extra if m >= nu]]))


def magnitudes_below(c, n_mag: int, edge_depth: int = 40) -> np.ndarray:
    """Magnitudes in [0, c): zero, a uniform grid, a log grid, and points c(1 - 2**-k).

    ``c`` may be a sequence; the grids then cover the largest value and the
    edge points are added for each one.
    """
    cs = np.atleast_1d(np.asarray(c, dtype=float))
    top = float(cs.max())
    uniform = top * np.linspace(0.0, 1.0, n_mag, endpoint=False)
    logs = top * np.geomspace(1e-6, 1.0, n_mag, endpoint=False)
    edge = (cs[:, None] * (1.0 - 2.0 ** -np.arange(1, edge_depth + 1))[None, :]).ravel()
    out = np.unique(np.concatenate([[0.0], uniform, logs, edge]))
    return out[out < top]


@dataclass
class Profile:
    """Per-magnitude reduction of a sampled quantity.

    ``values[f, k]`` is the max (or min) over all samples with magnitude
    ``mags[k]`` passing filter ``f``; ``counts[f, k]`` the number of such samples.
    """

    mags: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    total: int


def profile(
    model,
    mags: np.ndarray,
    *,
    T: float,
    K: float,
    n: int,
    config: SamplerConfig,
    quantity: str = "P",
    reduce: str = "max",
    dist_min: Sequence[Optional[float]] = (None,),
    dist_below=None,
    cone: Optional[Callable] = None,
) -> Profile:
    """Reduce ``quantity`` (``"P"``, the radial intercept, or ``"L"``) over sampled (s, z, v).

    Filter ``f`` keeps points with distance to the boundary ``>= dist_min[f]``.
    A sequence ``dist_below`` replaces those filters by ``< dist_below[f]``;
    a scalar is applied on top of every filter.
    """
    below_levels = None
    if dist_below is not None and np.ndim(dist_below) == 1:
        below_levels = [float(w) for w in dist_below]
        dist_min = [None] * len(below_levels)
        dist_below = None
    m = model.m
    mags = np.asarray(mags, dtype=float)
    dirs = sphere_directions(m, config.n_dir, config.depth_for(model))
    U = mags[:, None, None] * dirs[None, :, :]
    valid_u = np.ones(U.shape[:2], dtype=bool)
    if cone is not None:
        flat = U.reshape(-1, m)
        valid_u = np.array([bool(cone(v)) for v in flat]).reshape(U.shape[:2])
    ts = time_points(T, config.n_s) if model.uses_s else np.array([0.0])
    zs = ball_points(n, float(K), config.n_z) if model.uses_y else np.zeros((1, n))

    nf = len(dist_min)
    fill = -np.inf if reduce == "max" else np.inf
    values = np.full((nf, mags.size), fill)
    counts = np.zeros((nf, mags.size), dtype=np.int64)
    red = np.max if reduce == "max" else np.min

    dist_u = None
    need_dist = any(r is not None for r in dist_min) or dist_below is not None or below_levels is not None
    if need_dist and model.domain_is_product:
        dist_u = np.asarray(model.dist_to_boundary(0.0, np.zeros((1, 1, n)), U), dtype=float)
        dist_u = np.broadcast_to(dist_u, U.shape[:2])

    per_z = max(1, config.chunk // max(1, U.shape[0] * U.shape[1]))
    total = 0
    for s in ts:
        for z0 in range(0, zs.shape[0], per_z):
            Z = zs[z0:z0 + per_z][:, None, None, :]
            Uq = U[None, :, :, :]
            with np.errstate(all="ignore"):
                lam = np.asarray(model.eval(s, Z, Uq), dtype=float)
                q = np.asarray(model.intercept(s, Z, Uq, lam=lam), dtype=float) if quantity == "P" else lam
                shape = (Z.shape[0],) + U.shape[:2]
                q = np.broadcast_to(q, shape)
                lam = np.broadcast_to(lam, shape)
            ok = np.isfinite(lam) & np.isfinite(q) & valid_u[None, :, :]
            if need_dist:
                if dist_u is not None:
                    dist = np.broadcast_to(dist_u[None], q.shape)
                else:
                    dist = np.broadcast_to(np.asarray(model.dist_to_boundary(s, Z, Uq), dtype=float), q.shape)
                if dist_below is not None:
                    ok = ok & (dist < dist_below)
            total += int(ok.sum())
            for f, rho in enumerate(dist_min):
                if below_levels is not None:
                    okf = ok & (dist < below_levels[f])
                else:
                    okf = ok if rho is None else ok & (dist >= rho)
                cnt = okf.sum(axis=(0, 2))
                if not cnt.any():
                    continue
                masked = np.where(okf, q, fill)
                blk = red(masked, axis=(0, 2))
                values[f] = np.maximum(values[f], blk) if reduce == "max" else np.minimum(values[f], blk)
                counts[f] += cnt
    return Profile(mags, values, counts, total)
