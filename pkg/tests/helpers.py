"""Shared fixtures-by-function for the normal-form checks."""
import numpy as np
import sympy as sp

from ehfol.analytic import T, X1, X2, AnalyticField
from ehfol.normalform import JET_KEYS


def oscillating_fields(c, seed=1):
    """One localized, time-oscillating Klein-Gordon-like field per mass."""
    rng = np.random.default_rng(seed)
    out = []
    for j, cj in enumerate(c):
        cx, cy = rng.uniform(-1, 1, 2)
        e = (1 + 0.3 * j) * sp.exp(-((X1 - cx) ** 2 + (X2 - cy) ** 2) / 2 - (T - 3) ** 2 / 4)
        out.append(AnalyticField(e * sp.cos(0.7 * X1 - 0.4 * j * X2 + cj * T), cj**2))
    return out


def jet_function(fields):
    def jet_fn(t, x1, x2):
        return [{q: f.evaluate(q, t, x1, x2) for q in JET_KEYS} for f in fields]

    return jet_fn


def cone_points(n, r_factor, seed=2, t_range=(2.5, 3.5)):
    rng = np.random.default_rng(seed)
    t = rng.uniform(*t_range, n)
    r = rng.uniform(0, r_factor * t)
    th = rng.uniform(0, 2 * np.pi, n)
    return t, r * np.cos(th), r * np.sin(th)
