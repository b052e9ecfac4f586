"""Shared generators for the test suite."""

import math

import numpy as np

from bolza_reparam.trajectory import AdmissiblePair, ControlSignal, TimeGrid, evaluate_cost

# B and growth condition used by the pipeline property suite, per built-in
PIPELINE_CASES = {
    "minimal_length": (3.0, "H"),
    "discont_surface": (2.0, "H"),
    "hnew_1d": (2.0, "H"),
    "extended_star": (3.0, "H"),
    "radial_concave": (2.0, "M"),
}
M_SLACK = 0.1


def _spike(name, size, rng, m):
    if name == "extended_star":
        # along the u2 axis with |u1 u2| < 0.4, inside the star domain
        u1 = rng.uniform(-0.4, 0.4) / size
        return np.array([u1, math.sqrt(size**2 - u1**2)])
    d = rng.normal(size=m)
    return d / np.linalg.norm(d) * size


def random_pair(problem, rng, B, spike_level, tries=200):
    """A piecewise-constant pair with cost <= B.

    Small Gaussian controls on random cells plus up to three short spikes of
    size 1.2 to 3 times ``spike_level``, each costing at most B/4.
    """
    model = problem.lagrangian
    m = problem.m
    last = None
    for _ in range(tries):
        n = int(rng.integers(6, 30))
        cuts = rng.uniform(problem.t, problem.T, n - 1)
        spikes = []
        for _k in range(int(rng.integers(0, 4))):
            v = _spike(model.name, spike_level * rng.uniform(1.2, 3.0), rng, m)
            if model.uses_y:
                lam = 3.0 * float(np.linalg.norm(v))
            else:
                lam = float(model.eval(0.0, np.zeros(model.n or model.m), v))
            h = rng.uniform(0.05, 0.25) * B / lam
            a = rng.uniform(problem.t, problem.T - h)
            spikes.append((a, h, v))
        nodes = np.unique(np.concatenate([[problem.t, problem.T], cuts] + [[a, a + h] for a, h, _ in spikes]))
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        U = rng.normal(size=(len(mids), m)) * 0.2
        for a, h, v in spikes:
            U[(mids > a) & (mids < a + h)] = v
        try:
            pair = AdmissiblePair.from_control(problem, ControlSignal(TimeGrid(nodes), U))
        except Exception as exc:  # outside the domain; draw again
            last = exc
            continue
        if evaluate_cost(pair) <= B:
            return pair
    raise RuntimeError(f"no admissible pair with cost <= {B}: {last!r}")
