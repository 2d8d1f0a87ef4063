"""Closed-form spacetime fields for oracles and manufactured solutions.

An :class:`AnalyticField` wraps a sympy expression in (t, x1, x2) and hands
out numpy evaluators for its derivatives, boosts and rotations.
"""
from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np
import sympy as sp

__all__ = [
    "T",
    "X1",
    "X2",
    "AnalyticField",
    "gaussian_bump",
    "random_bumps",
    "outgoing_wave",
]

T, X1, X2 = sp.symbols("t x1 x2", real=True)
_VARS = (T, X1, X2)

_QUANTITIES = {
    "u": (),
    "ut": (T,),
    "u1": (X1,),
    "u2": (X2,),
    "utt": (T, T),
    "ut1": (T, X1),
    "ut2": (T, X2),
    "u11": (X1, X1),
    "u12": (X1, X2),
    "u22": (X2, X2),
}


class AnalyticField:
    """u(t, x1, x2) given symbolically; quantities are evaluated by lambdify."""

    def __init__(self, expr: sp.Expr, mass2: float = 0.0):
        self.expr = sp.sympify(expr)
        self.mass2 = float(mass2)
        self._cache: dict = {}

    def _fn(self, key, expr):
        if key not in self._cache:
            self._cache[key] = sp.lambdify(_VARS, expr, "numpy")
        return self._cache[key]

    def derivative(self, *wrt) -> sp.Expr:
        return sp.diff(self.expr, *wrt) if wrt else self.expr

    @cached_property
    def box(self) -> sp.Expr:
        """d_t^2 u - Laplacian u."""
        e = self.expr
        return sp.diff(e, T, 2) - sp.diff(e, X1, 2) - sp.diff(e, X2, 2)

    @cached_property
    def source(self) -> sp.Expr:
        """(box + c^2) u."""
        return self.box + self.mass2 * self.expr

    def boost(self, a: int) -> "AnalyticField":
        xa = X1 if a == 1 else X2
        return AnalyticField(xa * sp.diff(self.expr, T) + T * sp.diff(self.expr, xa), self.mass2)

    def rotate(self) -> "AnalyticField":
        return AnalyticField(X1 * sp.diff(self.expr, X2) - X2 * sp.diff(self.expr, X1), self.mass2)

    def evaluate(self, q: str, t, x1, x2) -> np.ndarray:
        t, x1, x2 = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
        )
        if q in _QUANTITIES:
            fn = self._fn(q, self.derivative(*_QUANTITIES[q]))
        elif q == "f":
            fn = self._fn(q, self.source)
        elif q == "ft":
            fn = self._fn(q, sp.diff(self.source, T))
        elif q == "box":
            fn = self._fn(q, self.box)
        else:
            raise KeyError(q)
        out = fn(t, x1, x2)
        return np.broadcast_to(np.asarray(out, dtype=float), t.shape).copy()

    def quantities(self, keys: Sequence[str] = ("u", "ut", "u1", "u2", "f")):
        """Callable (t, x1, x2) -> {q: array} for slice builders."""

        def fn(t, x1, x2):
            return {q: self.evaluate(q, t, x1, x2) for q in keys}

        return fn

    def __add__(self, other: "AnalyticField") -> "AnalyticField":
        return AnalyticField(self.expr + other.expr, self.mass2)

    def scaled(self, k: float) -> "AnalyticField":
        return AnalyticField(k * self.expr, self.mass2)


def gaussian_bump(
    amp: float = 1.0,
    center: Sequence[float] = (0.0, 0.0),
    width: float = 1.0,
    t0: float | None = None,
    t_width: float = 1.0,
    k: Sequence[float] = (0.0, 0.0),
    omega: float = 0.0,
    mass2: float = 0.0,
) -> AnalyticField:
    """amp * exp(-|x - c|^2 / w^2 [- (t - t0)^2 / tw^2]) * cos(k.x - omega t)."""
    c1, c2 = (float(v) for v in center)
    e = amp * sp.exp(-((X1 - c1) ** 2 + (X2 - c2) ** 2) / width**2)
    if t0 is not None:
        e = e * sp.exp(-((T - t0) ** 2) / t_width**2)
    if any(k) or omega:
        e = e * sp.cos(k[0] * X1 + k[1] * X2 - omega * T)
    return AnalyticField(e, mass2)


def random_bumps(rng: np.random.Generator, n_terms: int = 2, spread: float = 1.5,
                 width=(0.8, 1.6), t0=None, mass2: float = 0.0, phase: bool = True) -> AnalyticField:
    """Sum of a few Gaussians with random centres, widths and amplitudes."""
    e = sp.Integer(0)
    for _ in range(n_terms):
        amp = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        c = rng.uniform(-spread, spread, size=2)
        w = rng.uniform(*width)
        term = amp * sp.exp(-((X1 - c[0]) ** 2 + (X2 - c[1]) ** 2) / w**2)
        if t0 is not None:
            tc = rng.uniform(t0 - 0.5, t0 + 0.5)
            term = term * sp.exp(-((T - tc) ** 2) / (2.0 * w) ** 2)
        if phase:
            kk = rng.uniform(-1.0, 1.0, size=2)
            term = term * sp.cos(kk[0] * X1 + kk[1] * X2 + rng.uniform(0, 2 * np.pi))
        e = e + term
    return AnalyticField(e, mass2)


def outgoing_wave(eps: float = 1.0, center=(0.0, 0.0), t_shift: float = 0.0) -> AnalyticField:
    """Exact solution of box u = 0 in 2+1 dimensions.

    Re d_t q^(-1/2) = Re (t + i eps) q^(-3/2) with q = r^2 - (t + i eps)^2,
    which decays like r^-3 at fixed t and is smooth for real t.
    """
    tau = T - t_shift + sp.I * eps
    q = (X1 - center[0]) ** 2 + (X2 - center[1]) ** 2 - tau**2
    return _ComplexRealPart(eps * tau * q ** sp.Rational(-3, 2))


class _ComplexRealPart(AnalyticField):
    """Real part of a complex-analytic expression, evaluated in complex arithmetic."""

    def __init__(self, expr, mass2: float = 0.0):
        super().__init__(expr, mass2)

    def _fn(self, key, expr):
        if key not in self._cache:
            f = sp.lambdify(_VARS, expr, "numpy")
            self._cache[key] = lambda t, a, b: np.real(
                f(t.astype(complex), a.astype(complex), b.astype(complex))
            )
        return self._cache[key]

    def boost(self, a: int) -> "AnalyticField":
        xa = X1 if a == 1 else X2
        return _ComplexRealPart(xa * sp.diff(self.expr, T) + T * sp.diff(self.expr, xa), self.mass2)

    def rotate(self) -> "AnalyticField":
        return _ComplexRealPart(X1 * sp.diff(self.expr, X2) - X2 * sp.diff(self.expr, X1), self.mass2)

    def __add__(self, other):
        return _ComplexRealPart(self.expr + other.expr, self.mass2)

    def scaled(self, k: float):
        return _ComplexRealPart(k * self.expr, self.mass2)
