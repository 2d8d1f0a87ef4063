"""Euclidean-hyperboloidal slices F_s of 2+1 Minkowski space.

A slice F_s is the graph t = T(s, r).  It is the hyperboloid t^2 - r^2 = s^2
for r <= rho_H(s), a horizontal plane for r >= rho_H(s) + 1, and in between
the two are glued by the cut-off profile chi.

Everything here is vectorised over r; scalar inputs give scalar outputs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import BPoly, PPoly

__all__ = [
    "DomainError",
    "QuadratureError",
    "Region",
    "SliceGeometry",
    "chi",
    "chi_d1",
    "chi_d2",
    "chi_integral",
    "cutoff_sqrt_constant",
    "rho_hyp",
    "xi",
    "time_function",
    "flat_time",
    "jacobian",
    "zeta",
    "omega_weight",
    "region_of",
    "slice_fields",
    "slice_geometry",
    "normal_covector",
    "volume_element",
    "transition_gap",
    "weight_bound_constants",
]


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class QuadratureError(ArithmeticError):
    """Radial quadrature failed its self-consistency check."""


class Region(enum.Enum):
    HYPERBOLIC = "Hyperbolic"
    TRANSITION = "Transition"
    FLAT = "Flat"


# ---------------------------------------------------------------------------
# cut-off profile chi(x) = N * int_0^x exp(-1/(t(1-t))) dt

_NODES_HALF = 2000  # nodes on [0, 1/2]; spacing 2.5e-4


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    out[m] = np.exp(-1.0 / (xm * (1.0 - xm)))
    return out


def _bump_d1(x):
    # b' = b * (1 - 2x) / (x(1-x))^2
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    p = xm * (1.0 - xm)
    out[m] = np.exp(-1.0 / p) * (1.0 - 2.0 * xm) / p**2
    return out


def _bump_d2(x):
    # b'' = b * [ (1-2x)^2 (1 - 2p) / p^4 - 2/p^2 ] with p = x(1-x)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    p = xm * (1.0 - xm)
    q = 1.0 - 2.0 * xm
    out[m] = np.exp(-1.0 / p) * (q * q * (1.0 - 2.0 * p) / p**4 - 2.0 / p**2)
    return out


def _panel_integrals(f, edges, order=12):
    """Gauss-Legendre integral of f over each [edges[i], edges[i+1]]."""
    g, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b)[:, None] + half[:, None] * g[None, :]
    return half * (f(pts) @ w)


def _build_tables():
    nodes = np.linspace(0.0, 0.5, _NODES_HALF + 1)
    raw = np.concatenate([[0.0], np.cumsum(_panel_integrals(_bump, nodes))])
    norm = 1.0 / (2.0 * raw[-1])
    chi_half = norm * raw
    # X(z) = int_0^z chi = z chi(z) - N int_0^z t b(t) dt
    tb = np.concatenate(
        [[0.0], np.cumsum(_panel_integrals(lambda t: t * _bump(t), nodes))]
    )
    big_x_half = nodes * chi_half - norm * tb
    d1 = norm * _bump(nodes)
    d2 = norm * _bump_d1(nodes)
    d3 = norm * _bump_d2(nodes)
    chi_poly = BPoly.from_derivatives(
        nodes, np.column_stack([chi_half, d1, d2])
    )
    x_poly = BPoly.from_derivatives(
        nodes, np.column_stack([big_x_half, chi_half, d1])
    )
    return norm, chi_poly, x_poly, float(big_x_half[-1]), d3


_NORM, _CHI_BPOLY, _X_BPOLY, _X_HALF, _ = _build_tables()


class _UniformPiecewise:
    """Fast evaluation of a piecewise polynomial on uniform nodes over [0, 1/2]."""

    def __init__(self, bpoly):
        pp = PPoly.from_bernstein_basis(bpoly)
        self.c = pp.c  # shape (degree + 1, intervals), highest power first
        self.h = pp.x[1] - pp.x[0]
        self.n = pp.c.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip((x / self.h).astype(np.intp), 0, self.n - 1)
        d = x - k * self.h
        out = self.c[0, k]
        for row in self.c[1:]:
            out = out * d + row[k]
        return out


_CHI_POLY = _UniformPiecewise(_CHI_BPOLY)
_X_POLY = _UniformPiecewise(_X_BPOLY)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def chi(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, chi(1 - x) = 1 - chi(x)."""
    x, scalar = _as_array(x)
    y = np.clip(x, 0.0, 1.0)
    lo = y <= 0.5
    out = np.where(lo, _CHI_POLY(np.where(lo, y, 0.0)), 0.0)
    out = np.where(lo, out, 1.0 - _CHI_POLY(np.where(lo, 0.0, 1.0 - y)))
    return _out(out, scalar)


def chi_d1(x):
    x, scalar = _as_array(x)
    return _out(_NORM * _bump(x), scalar)


def chi_d2(x):
    x, scalar = _as_array(x)
    return _out(_NORM * _bump_d1(x), scalar)


def chi_integral(x):
    """int_0^x chi, equal to x - 1/2 once x >= 1."""
    x, scalar = _as_array(x)
    y = np.clip(x, 0.0, 1.0)
    lo = y <= 0.5
    # X(1 - z) = 1/2 - z + X(z) by the symmetry of chi
    zlo = np.where(lo, y, 0.0)
    zhi = np.where(lo, 0.0, 1.0 - y)
    val = np.where(lo, _X_POLY(zlo), 0.5 - zhi + _X_POLY(zhi))
    out = np.where(x >= 1.0, x - 0.5, np.where(x <= 0.0, 0.0, val))
    return _out(out, scalar)


def cutoff_sqrt_constant(samples: int = 20001) -> float:
    """sup over (0,1) of (|chi'| + |chi''|) / chi^(1/2) on a uniform sample."""
    x = np.linspace(0.0, 1.0, samples)[1:-1]
    c = chi(x)
    keep = c > 0.0
    ratio = (np.abs(chi_d1(x)) + np.abs(chi_d2(x)))[keep] / np.sqrt(c[keep])
    return float(ratio.max())


# ---------------------------------------------------------------------------
# slice geometry


def rho_hyp(s):
    """Outer radius (s^2 - 1)/2 of the hyperboloidal part of F_s."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 1.0):
        raise DomainError(f"rho_hyp needs s >= 1, got {s}")
    out = 0.5 * (s_arr * s_arr - 1.0)
    return float(out) if out.ndim == 0 else out


def xi(s, r):
    """1 on the hyperboloidal part, 0 on the flat part."""
    return 1.0 - chi(np.asarray(r, dtype=float) - rho_hyp(s))


def _check_s(s):
    if not np.isscalar(s) and np.ndim(s) != 0:
        raise DomainError("s must be a scalar")
    s = float(s)
    if not np.isfinite(s) or s < 2.0:
        raise DomainError(f"slices are defined for s >= 2, got {s}")
    return s


_PANELS = 16
_PANEL_ORDER = 16


def _transition_integrals(s, x, panels):
    """Integrals over [rho_H, rho_H + x] for 0 <= x <= 1, vectorised in x.

    Returns (int of dT/dr, int of dJ/dr).
    """
    rh = 0.5 * (s * s - 1.0)
    g, w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    x = np.asarray(x, dtype=float).ravel()
    # panel edges in units of x: k/panels * x
    k = np.arange(panels)
    half = 0.5 * x / panels
    centres = (k[None, :] + 0.5) * (x / panels)[:, None]
    y = centres[:, :, None] + half[:, None, None] * g[None, None, :]
    rho = rh + y
    root = np.sqrt(s * s + rho * rho)
    xi_v = 1.0 - chi(y)
    dt = xi_v * rho / root
    dj = s * chi_d1(y) * rho / root - xi_v * rho * s / root**3
    it = half * np.einsum("npq,q->n", dt, w)
    ij = half * np.einsum("npq,q->n", dj, w)
    return it, ij


def _checked_integrals(s, x):
    it, ij = _transition_integrals(s, x, _PANELS)
    it2, ij2 = _transition_integrals(s, x, 2 * _PANELS)
    err = max(
        float(np.max(np.abs(it2 - it), initial=0.0)),
        float(np.max(np.abs(ij2 - ij), initial=0.0)),
    )
    if err > 1e-12:
        raise QuadratureError(
            f"transition quadrature at s={s} disagrees between {_PANELS} and "
            f"{2 * _PANELS} panels by {err:.3e}"
        )
    return it2, ij2


@lru_cache(maxsize=256)
def _flat_values(s: float):
    it, ij = _checked_integrals(s, np.array([1.0]))
    rh = 0.5 * (s * s - 1.0)
    return rh + 1.0 + float(it[0]), s / (rh + 1.0) + float(ij[0])


def flat_time(s) -> float:
    """Constant value T(s) of the time function on the flat part of F_s."""
    return _flat_values(_check_s(s))[0]


def _radial(r):
    r, scalar = _as_array(r)
    if np.any(r < 0.0) or not np.all(np.isfinite(r)):
        raise DomainError("radius must be finite and >= 0")
    return r, scalar


def _time_and_jacobian(s, r):
    shape = np.shape(r)
    r, inverse = np.unique(np.atleast_1d(r).ravel(), return_inverse=True)
    rh = 0.5 * (s * s - 1.0)
    root = np.sqrt(s * s + r * r)
    t_val = root.copy()
    j_val = s / root
    mid = (r > rh) & (r < rh + 1.0)
    if np.any(mid):
        it, ij = _checked_integrals(s, r[mid] - rh)
        t_val[mid] = rh + 1.0 + it
        j_val[mid] = s / (rh + 1.0) + ij
    flat = r >= rh + 1.0
    if np.any(flat):
        tf, jf = _flat_values(s)
        t_val[flat] = tf
        j_val[flat] = jf
    return t_val[inverse].reshape(shape), j_val[inverse].reshape(shape)


def time_function(s, r):
    """(T, dT/dr) at radius r on F_s."""
    s = _check_s(s)
    r, scalar = _radial(r)
    t_val, _ = _time_and_jacobian(s, r)
    d = (1.0 - chi(r - rho_hyp(s))) * r / np.sqrt(s * s + r * r)
    return _out(t_val, scalar), _out(d, scalar)


def jacobian(s, r):
    """J = dT/ds at fixed x."""
    s = _check_s(s)
    r, scalar = _radial(r)
    _, j_val = _time_and_jacobian(s, r)
    return _out(j_val, scalar)


def zeta(s, r):
    s = float(s)
    r = np.asarray(r, dtype=float)
    x = xi(s, r)
    return np.sqrt(1.0 - x * x * r * r / (s * s + r * r))


def omega_weight(t, r):
    """(omega, d omega/dt, d omega/dr) with omega = 1 + 2 X((2 + r - t)/2).

    X is the primitive of chi, so omega = 1 when r - t <= -2 and
    omega = 2 + r - t when r - t >= 0; the slope chi((2 + r - t)/2) lies
    in [0, 1].
    """
    t, st = _as_array(t)
    r, sr = _as_array(r)
    y = 0.5 * (2.0 + r - t)
    om = 1.0 + 2.0 * chi_integral(y)
    slope = chi(y)
    scalar = st and sr
    return _out(np.asarray(om), scalar), _out(np.asarray(-slope), scalar), _out(
        np.asarray(slope), scalar
    )


def region_of(s, r):
    """Region tag(s); array input gives an object array of Region."""
    rh = rho_hyp(s)
    r = np.asarray(r, dtype=float)
    out = np.where(
        r <= rh,
        Region.HYPERBOLIC,
        np.where(r >= rh + 1.0, Region.FLAT, Region.TRANSITION),
    )
    return out.item() if out.ndim == 0 else out


def transition_gap(s) -> float:
    """t - r at the outer edge r = rho_H + 1 of the transition region.

    Lies strictly between 0 and 1; it is the constant fixed by chi that
    separates the flat part of F_s from the light cone.
    """
    return flat_time(s) - (rho_hyp(s) + 1.0)


def slice_fields(s, r, eta=None):
    """Pointwise scalar fields on F_s as a dict of arrays.

    Keys: T, dT_dr, J, xi, zeta, omega, domega_dt, domega_dr, bigA, and
    weight (= omega^(2 eta)) when eta is given.
    """
    s = _check_s(s)
    r, _ = _radial(r)
    t_val, j_val = _time_and_jacobian(s, r)
    root = np.sqrt(s * s + r * r)
    x = 1.0 - chi(r - rho_hyp(s))
    dtdr = x * r / root
    z = np.sqrt(1.0 - dtdr * dtdr)
    om, om_t, om_r = omega_weight(t_val, r)
    out = {
        "T": t_val,
        "dT_dr": dtdr,
        "J": j_val,
        "xi": x,
        "zeta": z,
        "omega": np.asarray(om),
        "domega_dt": np.asarray(om_t),
        "domega_dr": np.asarray(om_r),
        "bigA": t_val**2 + r * r - 2.0 * r * t_val * dtdr,
    }
    if eta is not None:
        out["weight"] = out["omega"] ** (2.0 * eta)
    return out


def _frame_pair(c1, c2):
    phi = np.array([[1.0, 0.0, 0.0], [c1, 1.0, 0.0], [c2, 0.0, 1.0]])
    psi = np.array([[1.0, 0.0, 0.0], [-c1, 1.0, 0.0], [-c2, 0.0, 1.0]])
    return phi, psi


@dataclass(frozen=True)
class SliceGeometry:
    """Foliation data at one point (s, x) with |x| = r.

    Frame matrices map the Cartesian basis (d_t, d_1, d_2) to the frame
    vectors, one row per frame vector; psi is the inverse of phi.
    """

    s: float
    r: float
    eta: float
    T: float
    dT_dr: float
    J: float
    xi: float
    zeta: float
    omega: float
    bigA: float
    region: Region
    phi_shf: np.ndarray
    psi_shf: np.ndarray
    phi_snf: np.ndarray
    psi_snf: np.ndarray
    phi_tf: np.ndarray
    psi_tf: np.ndarray

    @property
    def weight(self) -> float:
        return self.omega ** (2.0 * self.eta)


def slice_geometry(s, r, eta: float = 0.75, theta: float = 0.0) -> SliceGeometry:
    """All foliation quantities at the point of F_s with polar coords (r, theta)."""
    s = _check_s(s)
    r = float(r)
    f = slice_fields(s, np.array([r]), eta)
    vals = {k: float(v[0]) for k, v in f.items()}
    x1, x2 = r * np.cos(theta), r * np.sin(theta)
    t = vals["T"]
    root = np.sqrt(s * s + r * r)
    shf = _frame_pair(x1 / t, x2 / t)
    # x^a / r has limit 0 at the origin by convention
    snf = _frame_pair(x1 / r, x2 / r) if r > 0 else _frame_pair(0.0, 0.0)
    tf = _frame_pair(vals["xi"] * x1 / root, vals["xi"] * x2 / root)
    return SliceGeometry(
        s=s,
        r=r,
        eta=float(eta),
        T=t,
        dT_dr=vals["dT_dr"],
        J=vals["J"],
        xi=vals["xi"],
        zeta=vals["zeta"],
        omega=vals["omega"],
        bigA=vals["bigA"],
        region=region_of(s, r),
        phi_shf=shf[0],
        psi_shf=shf[1],
        phi_snf=snf[0],
        psi_snf=snf[1],
        phi_tf=tf[0],
        psi_tf=tf[1],
    )


def normal_covector(s, x1, x2):
    """Unnormalised normal (1, -dT/dx^1, -dT/dx^2) of F_s, so that n dx is n dsigma."""
    r = np.hypot(x1, x2)
    s = _check_s(s)
    x = 1.0 - chi(r - rho_hyp(s))
    root = np.sqrt(s * s + r * r)
    return np.ones_like(r), -x * x1 / root, -x * x2 / root


def volume_element(s, r):
    """dsigma / dx = sqrt(1 + |dT/dr|^2)."""
    _, d = time_function(s, r)
    return np.sqrt(1.0 + np.asarray(d) ** 2)


def weight_bound_constants(s_lo: float, s_hi: float, n_s: int = 200, n_r: int = 200,
                           r_max: float | None = None) -> dict:
    """Sampled constants of the pointwise weight bounds on an (s, r) grid.

    zeta2_margin: min of zeta^2 - s^2/(s^2 + r^2) (non-negative when the
    lower bound holds); C_cone: max of (|r - t| + 1)/(r zeta^2) over
    T_s u P_s; C_jac: max of J zeta^-1 / (s zeta).  r runs over
    [0, r_max] with r_max = 2 (rho_H(s_hi) + 1) by default.
    """
    ss = np.linspace(s_lo, s_hi, n_s)
    r_max = 2.0 * (rho_hyp(s_hi) + 1.0) if r_max is None else r_max
    rr = np.linspace(0.0, r_max, n_r)
    margin, c_cone, c_jac = np.inf, 0.0, 0.0
    for s in ss:
        f = slice_fields(s, rr)
        z2 = f["zeta"] ** 2
        margin = min(margin, float(np.min(z2 - s * s / (s * s + rr * rr))))
        out = rr > rho_hyp(s)
        if out.any():
            ratio = (np.abs(rr[out] - f["T"][out]) + 1.0) / (rr[out] * z2[out])
            c_cone = max(c_cone, float(ratio.max()))
        c_jac = max(c_jac, float(np.max(f["J"] / (s * z2))))
    return {"zeta2_margin": margin, "C_cone": c_cone, "C_jac": c_jac}
