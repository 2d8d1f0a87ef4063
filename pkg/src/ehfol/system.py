"""Right-hand sides of the main and auxiliary wave-Klein-Gordon systems.

Main system (one wave component phi1, m Klein-Gordon components v_i):

    box phi1        = A^alpha_j d_alpha(v_j^2) + T_W
    (box + c_i^2) v_i = K^{i alpha} v_i d_alpha phi1 + E^i_{jk} v_j v_k
                        + F^{i alpha}_{jk} v_j d_alpha v_k + T_KG^i

Auxiliary system, with u = w0 + A^{alpha j} d_alpha w_j standing in for phi1:

    box w0 = T_W,   box w_j = v_j^2,   (box + c_i^2) v_i = (as above with u)

box = d_t^2 - Laplacian throughout; the evolution solves
u_tt = Laplacian u - c^2 u + rhs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .fields import FieldState, Grid2D, d1, d2, laplacian
from .geometry import SystemCoefficients

__all__ = [
    "Variant",
    "SystemInstance",
    "GaussianProfile",
    "InitialDataSpec",
    "main_rhs",
    "auxiliary_rhs",
    "rhs",
    "reconstruct_phi1",
    "generate_initial_data",
    "auxiliary_data",
    "weighted_norms",
]


class Variant(enum.Enum):
    MAIN = "main"
    AUXILIARY = "auxiliary"


@dataclass
class SystemInstance:
    """A coefficient set with its formulation.

    ``forcing`` adds external sources, ``forcing(t, x1, x2) -> {name: array}``;
    it is how manufactured solutions enter.
    """

    coeffs: SystemCoefficients
    variant: Variant = Variant.MAIN
    cubic_enabled: bool = False
    forcing: Callable | None = None
    linear: bool = False

    def __post_init__(self):
        if self.variant is Variant.AUXILIARY and self.coeffs.A is None:
            raise ValueError("auxiliary system needs the A tensor")

    @property
    def n_kg(self) -> int:
        return self.coeffs.n_kg

    @property
    def kg_names(self) -> list[str]:
        return [f"v{j + 2}" for j in range(self.n_kg)]

    @property
    def wave_names(self) -> list[str]:
        if self.variant is Variant.MAIN:
            return ["phi1"]
        return ["w0"] + [f"w{j + 2}" for j in range(self.n_kg)]

    @property
    def names(self) -> list[str]:
        return self.wave_names + self.kg_names

    @property
    def mass2(self) -> dict[str, float]:
        out = {n: 0.0 for n in self.wave_names}
        out.update({n: float(c) for n, c in zip(self.kg_names, self.coeffs.c2)})
        return out


def _grad(f: np.ndarray, grid: Grid2D):
    return d1(f, 0, grid.dx, grid.periodic), d1(f, 1, grid.dx, grid.periodic)


def _mform(a, b):
    """m(da, db) in the signature (-1, 1, 1); a, b are (d_t, d_1, d_2) triples."""
    return -a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _kg_couplings(sys_: SystemInstance, dphi, phi, v, dv):
    """Klein-Gordon right-hand sides given phi1 (or u) and its gradient."""
    c = sys_.coeffs
    m = c.n_kg
    out = []
    for i in range(m):
        acc = np.zeros_like(v[0])
        for al in range(3):
            if c.K[i, al]:
                acc = acc + c.K[i, al] * v[i] * dphi[al]
        for j in range(m):
            for k in range(m):
                if c.E[i, j, k]:
                    acc = acc + c.E[i, j, k] * v[j] * v[k]
                for al in range(3):
                    if c.F[i, al, j, k]:
                        acc = acc + c.F[i, al, j, k] * v[j] * dv[k][al]
        if sys_.cubic_enabled:
            cub = c.cubic
            up = np.array([-1.0, 1.0, 1.0]) * np.asarray(c.dphiS, dtype=float)
            m_phi_s = sum(up[al] * dphi[al] for al in range(3))
            m_phi_phi = _mform(dphi, dphi)
            for j in range(m):
                if cub.H[i, j]:
                    acc = acc + cub.H[i, j] * m_phi_phi * v[j]
                for k in range(m):
                    if cub.G[i, j, k]:
                        acc = acc + cub.G[i, j, k] * m_phi_s * v[j] * v[k]
                    for l in range(m):
                        if cub.P[i, j, k, l]:
                            acc = acc + cub.P[i, j, k, l] * v[j] * v[k] * v[l]
        out.append(acc)
    return out


def _wave_cubic(sys_: SystemInstance, dphi, v, dv):
    c = sys_.coeffs
    cub = c.cubic
    m = c.n_kg
    acc = np.zeros_like(v[0])
    up = np.array([-1.0, 1.0, 1.0]) * np.asarray(c.dphiS, dtype=float)
    for j in range(m):
        m_vj_s = sum(up[al] * dv[j][al] for al in range(3))
        for k in range(m):
            if cub.Q_w[j, k]:
                acc = acc + cub.Q_w[j, k] * _mform(dphi, dv[j]) * v[k]
            for l in range(m):
                if cub.P_w[j, k, l]:
                    acc = acc + cub.P_w[j, k, l] * v[j] * v[k] * v[l]
                if cub.S_w[j, k, l]:
                    acc = acc + cub.S_w[j, k, l] * m_vj_s * v[k] * v[l]
                if cub.U_w[j, k, l]:
                    acc = acc + cub.U_w[j, k, l] * _mform(dv[j], dv[k]) * v[l]
    return acc


def main_rhs(state: FieldState, sys_: SystemInstance, grid: Grid2D) -> dict[str, np.ndarray]:
    c = sys_.coeffs
    names = sys_.kg_names
    v = [state.u[n] for n in names]
    dv = [(state.ut[n],) + _grad(state.u[n], grid) for n in names]
    phi = state.u["phi1"]
    dphi = (state.ut["phi1"],) + _grad(phi, grid)
    wave = np.zeros_like(phi)
    for j in range(c.n_kg):
        for al in range(3):
            if c.A[al, j]:
                wave = wave + 2.0 * c.A[al, j] * v[j] * dv[j][al]
    if sys_.cubic_enabled:
        wave = wave + _wave_cubic(sys_, dphi, v, dv)
    out = {"phi1": wave}
    out.update(dict(zip(names, _kg_couplings(sys_, dphi, phi, v, dv))))
    return out


def _reconstruct(state: FieldState, sys_: SystemInstance, grid: Grid2D, need_gradient: bool = True):
    """u = w0 + A^{alpha j} d_alpha w_j and, optionally, its spacetime gradient."""
    c = sys_.coeffs
    u = state.u["w0"].copy()
    du = [state.ut["w0"].copy(), *_grad(state.u["w0"], grid)] if need_gradient else None
    for j in range(c.n_kg):
        wn, vn = f"w{j + 2}", f"v{j + 2}"
        if not np.any(c.A[:, j]):
            continue
        w = state.u[wn]
        wt = state.ut[wn]
        w1, w2 = _grad(w, grid)
        u = u + c.A[0, j] * wt + c.A[1, j] * w1 + c.A[2, j] * w2
        if need_gradient:
            h = grid.dx
            per = grid.periodic
            wtt = laplacian(w, grid) + state.u[vn] ** 2
            wt1, wt2 = _grad(wt, grid)
            w11 = d2(w, 0, h, per)
            w22 = d2(w, 1, h, per)
            w12 = d1(w1, 1, h, per)
            hess = ((wtt, wt1, wt2), (wt1, w11, w12), (wt2, w12, w22))
            for b in range(3):
                du[b] = du[b] + sum(c.A[al, j] * hess[b][al] for al in range(3))
    return u, du


def reconstruct_phi1(state: FieldState, sys_: SystemInstance, grid: Grid2D) -> np.ndarray:
    """phi1 recovered from an auxiliary state."""
    return _reconstruct(state, sys_, grid, need_gradient=False)[0]


def auxiliary_rhs(state: FieldState, sys_: SystemInstance, grid: Grid2D) -> dict[str, np.ndarray]:
    c = sys_.coeffs
    names = sys_.kg_names
    v = [state.u[n] for n in names]
    dv = [(state.ut[n],) + _grad(state.u[n], grid) for n in names]
    u, du = _reconstruct(state, sys_, grid)
    out = {"w0": _wave_cubic(sys_, du, v, dv) if sys_.cubic_enabled else np.zeros_like(u)}
    for j in range(c.n_kg):
        out[f"w{j + 2}"] = v[j] ** 2
    out.update(dict(zip(names, _kg_couplings(sys_, du, u, v, dv))))
    return out


def rhs(state: FieldState, sys_: SystemInstance, grid: Grid2D) -> dict[str, np.ndarray]:
    """Nonlinear right-hand side plus forcing, i.e. (box + c^2) of each component."""
    if sys_.linear:
        out = {n: np.zeros(grid.shape) for n in sys_.names}
    elif sys_.variant is Variant.MAIN:
        out = main_rhs(state, sys_, grid)
    else:
        out = auxiliary_rhs(state, sys_, grid)
    if sys_.forcing is not None:
        x1, x2 = grid.coords
        for name, val in sys_.forcing(state.t, x1, x2).items():
            out[name] = out[name] + val
    for name, arr in out.items():
        if not np.all(np.isfinite(arr)):
            idx = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise FloatingPointError(f"non-finite right-hand side of {name} at t={state.t:.6g}, index {idx}")
    return out


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class GaussianProfile:
    """amp0 exp(-|x-c|^2/w^2) for the value and amp1 exp(...) for d_t."""

    amp0: float = 1.0
    amp1: float = 0.0
    width: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def values(self, x1, x2):
        g = np.exp(-((x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2) / self.width**2)
        return self.amp0 * g, self.amp1 * g


@dataclass
class InitialDataSpec:
    epsilon: float
    profiles: Mapping[str, GaussianProfile]
    eta: float = 0.75
    N: int = 2
    t0: float = 2.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not 0.5 < self.eta < 1.0:
            raise ValueError("eta must lie in (1/2, 1)")
        if self.N < 0 or self.N > 2:
            raise ValueError("derivative order N must be 0, 1 or 2 at desk scale")


def generate_initial_data(spec: InitialDataSpec, sys_: SystemInstance, grid: Grid2D):
    """Main-system data at t0 scaled by epsilon, and its weighted-norm report.

    For an auxiliary instance the main data is mapped through
    :func:`auxiliary_data`.
    """
    x1, x2 = grid.coords
    main_names = ["phi1"] + sys_.kg_names
    u, ut = {}, {}
    for name in main_names:
        prof = spec.profiles.get(name, GaussianProfile(0.0, 0.0))
        a, b = prof.values(x1, x2)
        u[name] = spec.epsilon * a
        ut[name] = spec.epsilon * b
    state = FieldState(spec.t0, u, ut)
    norms = weighted_norms(state, grid, spec.eta, spec.N, sys_.kg_names)
    if sys_.variant is Variant.AUXILIARY:
        state = auxiliary_data(state, sys_)
    return state, norms


def auxiliary_data(main_state: FieldState, sys_: SystemInstance) -> FieldState:
    """w0 = phi1_0, d_t w0 = phi1_1 - sum_i A^{0 i} (phi^i_0)^2, w_j = d_t w_j = 0."""
    c = sys_.coeffs
    u = {"w0": main_state.u["phi1"].copy()}
    ut = {"w0": main_state.ut["phi1"].copy()}
    for j in range(c.n_kg):
        vn = f"v{j + 2}"
        ut["w0"] = ut["w0"] - c.A[0, j] * main_state.u[vn] ** 2
        u[f"w{j + 2}"] = np.zeros_like(main_state.u[vn])
        ut[f"w{j + 2}"] = np.zeros_like(main_state.u[vn])
    for vn in sys_.kg_names:
        u[vn] = main_state.u[vn].copy()
        ut[vn] = main_state.ut[vn].copy()
    return FieldState(main_state.t, u, ut)


def _multi_derivatives(f: np.ndarray, grid: Grid2D, order: int):
    """All d^I f with |I| = order (mixed partials listed once per ordering)."""
    outs = [f]
    for _ in range(order):
        outs = [d1(g, ax, grid.dx, grid.periodic) for g in outs for ax in (0, 1)]
    return outs


def weighted_norms(state: FieldState, grid: Grid2D, eta: float, N: int, kg_names) -> dict:
    """Weighted L^2 norms of the data, one total per component and order |I|.

    wave: ||<r>^(eta+1/2+|I|) d^I d_x phi_0|| + ||<r>^(eta+1/2+|I|) d^I phi_1||
    KG:   ||<r>^(eta+|I|) d^I phi_0|| + ||<r>^(eta+|I|) d^I d_x phi_0||
          + ||<r>^(eta+|I|) d^I phi_1||
    """
    r = grid.radius
    br = np.sqrt(1.0 + r * r)
    dxa = grid.dx**2

    def l2(w, f):
        return math.sqrt(float(np.sum((w * f) ** 2) * dxa))

    report: dict[str, dict[int, float]] = {}
    for name in state.u:
        wave = name not in kg_names
        per = {}
        for k in range(N + 1):
            w = br ** (eta + (0.5 if wave else 0.0) + k)
            total = 0.0
            for g in _multi_derivatives(state.u[name], grid, k):
                total += l2(w, d1(g, 0, grid.dx, grid.periodic)) + l2(w, d1(g, 1, grid.dx, grid.periodic))
                if not wave:
                    total += l2(w, g)
            for g in _multi_derivatives(state.ut[name], grid, k):
                total += l2(w, g)
            per[k] = total
        report[name] = per
    return report
