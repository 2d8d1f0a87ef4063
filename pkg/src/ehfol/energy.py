"""Energies on the slices F_s and the diagnostics built on them.

All functionals take :class:`~ehfol.fields.SliceData`: point values of a
field and its first derivatives at (T(s, |x|), x), with quadrature weights
in dx.  Grid slices use midpoint weights, analytic checks use the polar
rule of :func:`ehfol.fields.polar_slice`.

Conventions: box = d_t^2 - Laplacian, f = box u + c^2 u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from . import foliation
from .analytic import AnalyticField
from .fields import SliceData, polar_slice

__all__ = [
    "EnergyValue",
    "EnergyReport",
    "energy_density",
    "energy",
    "energy_forms",
    "ghost_density",
    "source_density",
    "integrate_in_s",
    "energy_identity_residual",
    "flat_energy",
    "flat_bridge",
    "conformal_density",
    "conformal_parts_density",
    "conformal_energy",
    "conformal_source_norm",
    "conformal_estimate_check",
    "conformal_identity_residual",
    "f_functional",
    "sobolev_quantities",
    "sobolev_ratio",
    "sobolev_keys_from_jet",
    "kg_extra_decay_ratio",
    "hessian_ratio",
    "sup_on_hyperbolic",
]


def _pieces(sd: SliceData, comp: str):
    q = sd.comps[comp]
    return q["u"], q["ut"], q["u1"], q["u2"]


def _safe_unit(sd: SliceData):
    """x^a / r with the limit 0 at the origin."""
    r = sd.r
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, sd.x1 / safe, 0.0), np.where(r > 0, sd.x2 / safe, 0.0)


# ---------------------------------------------------------------------------
# standard weighted energy


def energy_density(sd: SliceData, comp: str, eta: float, c2: float, form: int = 1) -> np.ndarray:
    """omega^(2 eta) e_c[u] in one of three algebraically equal forms.

    1: u_t^2 + |grad u|^2 + 2 (xi x^a / sqrt(s^2+r^2)) u_a u_t + c^2 u^2
    2: zeta^2 u_t^2 + sum_a |dbar_a u|^2 + c^2 u^2
    3: zeta^2 |grad u|^2 + |dbar_perp u|^2 + xi^2 (Omega u)^2 / (s^2 + r^2) + c^2 u^2
    """
    u, ut, u1, u2 = _pieces(sd, comp)
    g = sd.geo
    s = sd.s
    r2 = sd.r**2
    k = g["xi"] / np.sqrt(s * s + r2)
    k1, k2 = k * sd.x1, k * sd.x2
    if form == 1:
        e = ut * ut + u1 * u1 + u2 * u2 + 2.0 * (k1 * u1 + k2 * u2) * ut
    elif form == 2:
        z2 = g["zeta"] ** 2
        e = z2 * ut * ut + (k1 * ut + u1) ** 2 + (k2 * ut + u2) ** 2
    elif form == 3:
        z2 = g["zeta"] ** 2
        perp = ut + k1 * u1 + k2 * u2
        om = sd.x1 * u2 - sd.x2 * u1
        e = z2 * (u1 * u1 + u2 * u2) + perp * perp + (g["xi"] ** 2) * om * om / (s * s + r2)
    else:
        raise ValueError("form must be 1, 2 or 3")
    return g["omega"] ** (2.0 * eta) * (e + c2 * u * u)


@dataclass(frozen=True)
class EnergyValue:
    total: float
    H: float
    T: float
    P: float


def energy(sd: SliceData, comp: str, eta: float, c2: float, form: int = 1) -> EnergyValue:
    """E_{eta,c}(s, u) with its split over H*_s, T_s and P_s."""
    dens = energy_density(sd, comp, eta, c2, form) * sd.weights
    m = sd.region_masks()
    return EnergyValue(
        total=float(dens.sum()),
        H=float(dens[m["H"]].sum()),
        T=float(dens[m["T"]].sum()),
        P=float(dens[m["P"]].sum()),
    )


def energy_forms(sd: SliceData, comp: str, eta: float, c2: float) -> tuple[float, float, float]:
    return tuple(energy(sd, comp, eta, c2, f).total for f in (1, 2, 3))


def ghost_density(sd: SliceData, comp: str, eta: float, c2: float) -> np.ndarray:
    """2 eta omega^(2eta-1) aleph' (sum_a |dtilde_a u|^2 + c^2 u^2) J, per dx ds."""
    u, ut, u1, u2 = _pieces(sd, comp)
    g = sd.geo
    n1, n2 = _safe_unit(sd)
    good = (n1 * ut + u1) ** 2 + (n2 * ut + u2) ** 2 + c2 * u * u
    slope = -g["domega_dt"]
    return 2.0 * eta * g["omega"] ** (2.0 * eta - 1.0) * slope * good * g["J"]


def source_density(sd: SliceData, comp: str, eta: float) -> np.ndarray:
    """2 omega^(2 eta) u_t f J, per dx ds."""
    q = sd.comps[comp]
    g = sd.geo
    return 2.0 * g["omega"] ** (2.0 * eta) * q["ut"] * q["f"] * g["J"]


def integrate_in_s(s_values: Sequence[float], values: Sequence[float]) -> float:
    """Simpson's rule in s (odd sample count) or trapezoid otherwise."""
    s_values = np.asarray(s_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(s_values) < 2:
        return 0.0
    if len(s_values) % 2 == 1 and len(s_values) >= 3:
        return float(simpson(values, x=s_values))
    return float(trapezoid(values, x=s_values))


def energy_identity_residual(slices: Sequence[SliceData], comp: str, eta: float, c2: float) -> dict:
    """E(s1) - E(s0) + ghost - source over the slices s0 < ... < s1.

    Spacetime integrals are integrated in s over the given slices.
    """
    if len(slices) < 3:
        raise ValueError("need at least three slices between s0 and s1")
    ss = [sd.s for sd in slices]
    if any(b <= a for a, b in zip(ss, ss[1:])):
        raise ValueError("slices must be ordered by increasing s")
    ghost = [float((ghost_density(sd, comp, eta, c2) * sd.weights).sum()) for sd in slices]
    src = [float((source_density(sd, comp, eta) * sd.weights).sum()) for sd in slices]
    e0 = energy(slices[0], comp, eta, c2).total
    e1 = energy(slices[-1], comp, eta, c2).total
    g_int = integrate_in_s(ss, ghost)
    s_int = integrate_in_s(ss, src)
    return {
        "E0": e0,
        "E1": e1,
        "ghost": g_int,
        "source": s_int,
        "residual": abs(e1 - e0 + g_int - s_int),
    }


def flat_energy(t: float, x1, x2, weights, u, ut, u1, u2, eta: float, c2: float) -> float:
    """Weighted energy on the plane {t = const}."""
    om, _, _ = foliation.omega_weight(np.full(np.shape(x1), t), np.hypot(x1, x2))
    dens = np.asarray(om) ** (2.0 * eta) * (ut * ut + u1 * u1 + u2 * u2 + c2 * u * u)
    return float((dens * weights).sum())


def flat_bridge(field_: AnalyticField, eta: float, r_max: float, n_theta: int = 64,
                order: int = 16, t_order: int = 12) -> dict:
    """Both sides of E(2) = E_flat(2) + source - ghost over {2 <= t <= T(2, |x|)}.

    The ghost integral is the same positive spacetime term as in the slice
    identity; it vanishes only where omega is constant.
    """
    c2 = field_.mass2
    sd2 = polar_slice(2.0, {"u": field_.quantities()}, r_max, n_theta, order)
    e_slice = energy(sd2, "u", eta, c2).total
    x1, x2, w = sd2.x1, sd2.x2, sd2.weights
    q = {k: field_.evaluate(k, 2.0, x1, x2) for k in ("u", "ut", "u1", "u2")}
    e_flat = flat_energy(2.0, x1, x2, w, q["u"], q["ut"], q["u1"], q["u2"], eta, c2)
    # t-integration per point between 2 and T(2, r)
    tt, _ = foliation.time_function(2.0, sd2.r)
    gl, gw = np.polynomial.legendre.leggauss(t_order)
    src = np.zeros_like(x1)
    gho = np.zeros_like(x1)
    r = sd2.r
    safe = np.where(r > 0, r, 1.0)
    n1, n2 = np.where(r > 0, x1 / safe, 0.0), np.where(r > 0, x2 / safe, 0.0)
    half = 0.5 * (tt - 2.0)
    for gk, wk in zip(gl, gw):
        t = 2.0 + half * (gk + 1.0)
        v = {k: field_.evaluate(k, t, x1, x2) for k in ("u", "ut", "u1", "u2", "f")}
        om, om_t, _ = foliation.omega_weight(t, r)
        om = np.asarray(om)
        src += wk * half * 2.0 * om ** (2.0 * eta) * v["ut"] * v["f"]
        good = (n1 * v["ut"] + v["u1"]) ** 2 + (n2 * v["ut"] + v["u2"]) ** 2 + c2 * v["u"] ** 2
        gho += wk * half * 2.0 * eta * om ** (2.0 * eta - 1.0) * (-np.asarray(om_t)) * good
    source = float((src * w).sum())
    ghost = float((gho * w).sum())
    return {
        "E_slice": e_slice,
        "E_flat": e_flat,
        "source": source,
        "ghost": ghost,
        "residual": abs(e_slice - (e_flat + source - ghost)),
    }


# ---------------------------------------------------------------------------
# conformal energy (2+1 dimensions)


def _conformal_common(sd: SliceData, comp: str):
    u, ut, u1, u2 = _pieces(sd, comp)
    g = sd.geo
    t = g["T"]
    r = sd.r
    xg = sd.x1 * u1 + sd.x2 * u2  # x . grad u = r d_r u
    return u, ut, u1, u2, g, t, r, xg


def conformal_density(sd: SliceData, comp: str = "u") -> np.ndarray:
    """Raw conformal energy density on F_s."""
    u, ut, u1, u2, g, t, r, xg = _conformal_common(sd, comp)
    s = sd.s
    root = np.sqrt(s * s + r * r)
    xi = g["xi"]
    b = 2.0 * xi * t * r * r / root
    return (
        0.5 * (t * t + r * r + b) * ut * ut
        + 0.5 * (t * t + r * r - b) * (u1 * u1 + u2 * u2)
        + (2.0 * t + xi * (t * t + r * r) / root) * xg * ut
        + 2.0 * t * xi * xg * xg / root
        + t * u * (ut + xi * xg / root)
        - 0.5 * u * u
    )


def conformal_parts_density(sd: SliceData, comp: str = "u"):
    """Integrands of the three non-negative parts."""
    u, ut, u1, u2, g, t, r, xg = _conformal_common(sd, comp)
    big_a = g["bigA"]
    z2 = g["zeta"] ** 2
    k2u = (t * t + r * r) * ut + 2.0 * t * xg
    safe = np.where(r > 0, r, 1.0)
    om = sd.x1 * u2 - sd.x2 * u1
    om_r = np.where(r > 0, om / safe, 0.0)
    dbar_r = g["dT_dr"] * ut + np.where(r > 0, xg / safe, 0.0)
    p1 = 0.5 * z2 * (k2u + t * u) ** 2 / big_a
    p2 = 0.5 * big_a * om_r**2
    p3 = 0.5 * ((t * t - r * r) * dbar_r - (r - t * g["dT_dr"]) * u) ** 2 / big_a
    return p1, p2, p3


def conformal_energy(sd: SliceData, comp: str = "u") -> dict:
    w = sd.weights
    raw = float((conformal_density(sd, comp) * w).sum())
    parts = tuple(float((p * w).sum()) for p in conformal_parts_density(sd, comp))
    return {"raw": raw, "parts": parts, "gap": raw - sum(parts)}


def conformal_source_norm(sd: SliceData, comp: str = "u") -> float:
    """|| J zeta^-1 A^(1/2) box u ||_{L^2(F_s)} with box u read from 'f'."""
    g = sd.geo
    dens = (g["J"] / g["zeta"]) ** 2 * g["bigA"] * sd.comps[comp]["f"] ** 2
    return math.sqrt(float((dens * sd.weights).sum()))


def conformal_estimate_check(slices: Sequence[SliceData], comp: str = "u") -> dict:
    """Margin of E_con(s1)^(1/2) <= E_con(s0)^(1/2) + (sqrt 2 / 2) int ||...|| ds.

    A non-negative margin means the estimate holds at every probed s.
    """
    ss = [sd.s for sd in slices]
    e = [max(conformal_energy(sd, comp)["raw"], 0.0) for sd in slices]
    norms = [conformal_source_norm(sd, comp) for sd in slices]
    margins = []
    for k in range(1, len(slices)):
        rhs = math.sqrt(e[0]) + 0.5 * math.sqrt(2.0) * integrate_in_s(ss[: k + 1], norms[: k + 1])
        margins.append(rhs - math.sqrt(e[k]))
    return {"s": ss[1:], "margins": margins, "min_margin": min(margins) if margins else 0.0}


def conformal_identity_residual(slices: Sequence[SliceData], comp: str = "u") -> dict:
    """E_con(s1) - E_con(s0) - int int (K_2 u + t u) box u J dx ds."""
    vals = []
    for sd in slices:
        u, ut, u1, u2, g, t, r, xg = _conformal_common(sd, comp)
        k2u = (t * t + r * r) * ut + 2.0 * t * xg
        vals.append(float(((k2u + t * u) * sd.comps[comp]["f"] * g["J"] * sd.weights).sum()))
    ss = [sd.s for sd in slices]
    e0 = conformal_energy(slices[0], comp)["raw"]
    e1 = conformal_energy(slices[-1], comp)["raw"]
    src = integrate_in_s(ss, vals)
    return {"E0": e0, "E1": e1, "source": src, "residual": abs(e1 - e0 - src)}


def f_functional(slices: Sequence[SliceData], comp: str = "u") -> dict:
    """Ingredients of ||zeta u||_{F_s0} + E_con(s)^(1/2) + int tau^-1 E_con^(1/2).

    The energy in the functional is taken to be the conformal energy.
    """
    sd0 = slices[0]
    g0 = sd0.geo
    zu = math.sqrt(float(((g0["zeta"] * sd0.comps[comp]["u"]) ** 2 * sd0.weights).sum()))
    ss = [sd.s for sd in slices]
    e_half = [math.sqrt(max(conformal_energy(sd, comp)["raw"], 0.0)) for sd in slices]
    hist = integrate_in_s(ss, [v / s for v, s in zip(e_half, ss)])
    return {
        "zeta_u_s0": zu,
        "E_half": e_half[-1],
        "history": hist,
        "F_half": zu + e_half[-1] + hist,
    }


# ---------------------------------------------------------------------------
# Sobolev ratios


def sobolev_quantities(fld: AnalyticField, variant: str):
    """Callable for polar_slice giving the derivative families a ratio needs.

    hyperbolic: u and L^J u for |J| <= 2, with "Lab" meaning L_a L_b u.
    exterior: u, dbar_r u, dbar_r^2 u, Omega u, Omega^2 u, dbar_r Omega u.
    """
    if variant == "hyperbolic":
        l1, l2 = fld.boost(1), fld.boost(2)
        fams = {
            "u": fld, "L1": l1, "L2": l2,
            "L11": l1.boost(1), "L12": l2.boost(1), "L21": l1.boost(2), "L22": l2.boost(2),
        }

        def fn(t, x1, x2):
            return {k: f.evaluate("u", t, x1, x2) for k, f in fams.items()}

        return fn
    if variant == "exterior":
        om = fld.rotate()
        oo = om.rotate()

        def fn(t, x1, x2):
            return {
                "u": fld.evaluate("u", t, x1, x2),
                "O": om.evaluate("u", t, x1, x2),
                "OO": oo.evaluate("u", t, x1, x2),
                **{f"f_{q}": fld.evaluate(q, t, x1, x2) for q in
                   ("ut", "u1", "u2", "utt", "ut1", "ut2", "u11", "u12", "u22")},
                **{f"o_{q}": om.evaluate(q, t, x1, x2) for q in ("ut", "u1", "u2")},
            }

        return fn
    raise ValueError(f"unknown variant {variant!r}")


def sobolev_keys_from_jet(sd: SliceData, comp: str) -> dict[str, np.ndarray]:
    """Boost and rotation families from a second-order jet (u, ut, ..., u22).

    Used for grid slices; the analytic route through sobolev_quantities
    differentiates symbolically instead.
    """
    q = sd.comps[comp]
    t = sd.t
    x = (sd.x1, sd.x2)
    d = {1: q["u1"], 2: q["u2"]}
    dt = {1: q["ut1"], 2: q["ut2"]}
    dd = {(1, 1): q["u11"], (1, 2): q["u12"], (2, 1): q["u12"], (2, 2): q["u22"]}
    out = {"u": q["u"]}
    for a in (1, 2):
        out[f"L{a}"] = x[a - 1] * q["ut"] + t * d[a]
        for b in (1, 2):
            out[f"L{a}{b}"] = (
                x[a - 1] * x[b - 1] * q["utt"]
                + (t * q["ut"] if a == b else 0.0)
                + t * x[b - 1] * dt[a]
                + x[a - 1] * d[b]
                + t * x[a - 1] * dt[b]
                + t * t * dd[(a, b)]
            )
    x1, x2 = x
    u1, u2 = q["u1"], q["u2"]
    out["O"] = x1 * u2 - x2 * u1
    out["OO"] = x1 * x1 * q["u22"] - 2.0 * x1 * x2 * q["u12"] + x2 * x2 * q["u11"] - x1 * u1 - x2 * u2
    for k in ("ut", "u1", "u2", "utt", "ut1", "ut2", "u11", "u12", "u22"):
        out[f"f_{k}"] = q[k]
    out["o_ut"] = x1 * q["ut2"] - x2 * q["ut1"]
    out["o_u1"] = u2 + x1 * q["u12"] - x2 * q["u11"]
    out["o_u2"] = x1 * q["u22"] - u1 - x2 * q["u12"]
    return out


def _radial_slice_derivatives(sd: SliceData, q: Mapping[str, np.ndarray]):
    """dbar_r u, dbar_r^2 u and dbar_r Omega u along F_s from Cartesian data."""
    s = sd.s
    r = sd.r
    n1, n2 = sd.x1 / r, sd.x2 / r
    root = np.sqrt(s * s + r * r)
    g = sd.geo
    tr = g["dT_dr"]
    trr = -foliation.chi_d1(r - foliation.rho_hyp(s)) * r / root + g["xi"] * s * s / root**3
    dr = tr * q["f_ut"] + n1 * q["f_u1"] + n2 * q["f_u2"]
    drr = (
        trr * q["f_ut"]
        + tr * tr * q["f_utt"]
        + 2.0 * tr * (n1 * q["f_ut1"] + n2 * q["f_ut2"])
        + n1 * n1 * q["f_u11"] + 2.0 * n1 * n2 * q["f_u12"] + n2 * n2 * q["f_u22"]
    )
    dro = tr * q["o_ut"] + n1 * q["o_u1"] + n2 * q["o_u2"]
    return dr, drr, dro


def sobolev_ratio(sd: SliceData, variant: str, eta: float = 0.75, comp: str = "u") -> float:
    """Measured constant of the hyperbolic or exterior global Sobolev bound.

    hyperbolic: sup t |u| / sum_{|J|<=2} ||L^J u||_{L^2(H*_s)}
    exterior:   sup omega^eta <r>^(1/2) |u| / ((1+eta) sum_{i+j<=2} ||omega^eta dbar_r^i Omega^j u||)
    sd must cover the relevant region only (H*_s or T_s u P_s).
    """
    q = sd.comps[comp]
    w = sd.weights
    g = sd.geo
    if variant == "hyperbolic":
        keys = ("u", "L1", "L2", "L11", "L12", "L21", "L22")
        den = sum(math.sqrt(float((q[k] ** 2 * w).sum())) for k in keys)
        num = float(np.max(g["T"] * np.abs(q["u"])))
    elif variant == "exterior":
        dr, drr, dro = _radial_slice_derivatives(sd, q)
        om_eta = g["omega"] ** eta
        fams = (q["u"], dr, drr, q["O"], q["OO"], dro)
        den = (1.0 + eta) * sum(math.sqrt(float(((om_eta * f) ** 2 * w).sum())) for f in fams)
        num = float(np.max(om_eta * np.sqrt(1.0 + sd.r**2) * np.abs(q["u"])))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if den == 0.0:
        return 0.0
    return num / den


# ---------------------------------------------------------------------------
# decay diagnostics


def kg_extra_decay_ratio(sd: SliceData, comp: str, eta: float, c2: float, near: float = 3.0) -> float:
    """sup over T_s u P_s, r <= near * t, of
    c^2 |v| / (<r>^(-3/2) <r - t>^(1 - eta) E^{TP}(s)^(1/2) + |f|)."""
    q = sd.comps[comp]
    ev = energy(sd, comp, eta, c2)
    e_tp = max(ev.T + ev.P, 0.0)
    if e_tp == 0.0 and not np.any(q["f"]):
        return 0.0
    m = sd.region_masks()
    r = sd.r
    t = sd.t
    sel = (m["T"] | m["P"]) & (r <= near * t)
    if not sel.any():
        return 0.0
    den = (1.0 + r[sel] ** 2) ** -0.75 * (1.0 + (r[sel] - t[sel]) ** 2) ** (0.5 * (1.0 - eta)) * math.sqrt(
        e_tp
    ) + np.abs(q["f"][sel])
    num = c2 * np.abs(q["u"][sel])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, 0.0)
    return float(ratio.max())


def hessian_ratio(sd: SliceData, comp: str) -> float:
    """sup over H*_s of (s/t)^2 |dd u| / (|box u| + t^-1 |du|_1).

    |dd u| is the largest second derivative; |du|_1 sums |d_alpha u| and the
    boosts |L_a d_alpha u| over alpha and a.
    """
    q = sd.comps[comp]
    m = sd.region_masks()["H"]
    t = sd.t[m]
    x = (sd.x1[m], sd.x2[m])
    grad = {0: q["ut"][m], 1: q["u1"][m], 2: q["u2"][m]}
    hess = {
        (0, 0): q["utt"][m], (0, 1): q["ut1"][m], (0, 2): q["ut2"][m],
        (1, 1): q["u11"][m], (1, 2): q["u12"][m], (2, 2): q["u22"][m],
    }

    def h(a, b):
        return hess[(min(a, b), max(a, b))]

    dd = np.max(np.abs(np.stack(list(hess.values()))), axis=0)
    du1 = sum(np.abs(grad[al]) for al in range(3))
    for a in (1, 2):
        for al in range(3):
            du1 = du1 + np.abs(x[a - 1] * h(0, al) + t * h(a, al))
    box = q["utt"][m] - q["u11"][m] - q["u22"][m]
    den = np.abs(box) + du1 / t
    num = (sd.s / t) ** 2 * dd
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, 0.0)
    return float(ratio.max()) if ratio.size else 0.0


def sup_on_hyperbolic(sd: SliceData, values: np.ndarray) -> float:
    m = sd.region_masks()["H"]
    return float(np.max(np.abs(values[m]))) if m.any() else 0.0


@dataclass
class EnergyReport:
    """One row of energies.csv."""

    s: float
    E_total: float = 0.0
    E_H: float = 0.0
    E_T: float = 0.0
    E_P: float = 0.0
    ghost: float = 0.0
    Econ_raw: float = float("nan")
    Econ_p1: float = float("nan")
    Econ_p2: float = float("nan")
    Econ_p3: float = float("nan")
    sob_hyp: float = float("nan")
    sob_ext: float = float("nan")
    kg_decay: float = float("nan")

    COLUMNS = (
        "s", "E_total", "E_H", "E_T", "E_P", "ghost", "Econ_raw",
        "Econ_p1", "Econ_p2", "Econ_p3", "sob_hyp", "sob_ext", "kg_decay",
    )

    def row(self) -> list[float]:
        return [getattr(self, c) for c in self.COLUMNS]
