"""Physical-space normal form for quadratic Klein-Gordon couplings.

Klein-Gordon fields v_i with (box + c_i^2) v_i = F_i, box = d_t^2 - Laplacian
and m = diag(1, -1, -1).  For a triple (i, j, k) write

    D  = c_i^2 - c_j^2 - c_k^2,       DD = D^2 - 4 c_j^2 c_k^2,
    g  = (t^2 - r^2) / t^2.

Building blocks

    vt0_jk = v_j v_k,   vt2_jk = g d_t v_j d_t v_k,   vt1_jk = v_j d_t v_k

and their combinations

    v0_ijk = (D vt0 - 2 vt2) / DD,   v2_ijk = (D vt2 - 2 c_j^2 c_k^2 vt0) / DD,
    v1_ijk = (D vt1_jk + 2 c_k^2 vt1_kj) / DD

satisfy (box + c_i^2) v0 = v_j v_k + R0 and (box + c_i^2) v1 = v_j d_t v_k + R1
with remainders that are cubic or carry extra decay.

A jet is a mapping with keys u, ut, u1, u2, utt, ut1, ut2, u11, u12, u22, f,
ft evaluated on a common point set (t, x1, x2); 'f' is (box + c^2) u.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import foliation

__all__ = [
    "ResonanceError",
    "NormalFormContext",
    "AuxiliaryFields",
    "conical_cutoff",
    "cutoff_bound_constant",
    "flat_wave_decomposition",
    "good_null_form",
    "null_form",
    "build_auxiliaries",
    "identity_rhs",
    "verify_identities",
    "transform",
    "transform_check",
    "IDENTITIES",
]

IDENTITIES = ("vt0", "vt2", "vt1", "v0", "v1")
JET_KEYS = ("u", "ut", "u1", "u2", "utt", "ut1", "ut2", "u11", "u12", "u22", "f", "ft")


class ResonanceError(ValueError):
    """A mass triple with vanishing (or near-vanishing) denominator."""


@dataclass
class NormalFormContext:
    """Masses c_i and couplings A_i^{jk}, B_i^{jk} (arrays indexed [i, j, k])."""

    c: Sequence[float]
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    resonance_floor: float = 1e-8

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        m = len(self.c)
        if m == 0 or np.any(self.c <= 0):
            raise ValueError("masses must be positive")
        self.A = np.zeros((m, m, m)) if self.A is None else np.asarray(self.A, dtype=float)
        self.B = np.zeros((m, m, m)) if self.B is None else np.asarray(self.B, dtype=float)
        if self.A.shape != (m, m, m) or self.B.shape != (m, m, m):
            raise ValueError("coupling tensors must have shape (m, m, m)")
        if not np.allclose(self.A, np.swapaxes(self.A, 1, 2), rtol=0, atol=1e-14):
            raise ValueError("A_i^{jk} must be symmetric in j, k")
        for i, j, k in self.triples():
            self.check(i, j, k)

    @property
    def m(self) -> int:
        return len(self.c)

    @property
    def c2(self) -> np.ndarray:
        return self.c**2

    def triples(self):
        return itertools.product(range(self.m), repeat=3)

    def D(self, i, j, k) -> float:
        c2 = self.c2
        return float(c2[i] - c2[j] - c2[k])

    def denominator(self, i, j, k) -> float:
        c2 = self.c2
        return self.D(i, j, k) ** 2 - 4.0 * c2[j] * c2[k]

    def check(self, i, j, k) -> float:
        dd = self.denominator(i, j, k)
        if abs(dd) <= self.resonance_floor * float(np.max(self.c)) ** 4:
            raise ResonanceError(
                f"resonant triple (i, j, k) = ({i}, {j}, {k}): c = "
                f"({self.c[i]:.6g}, {self.c[j]:.6g}, {self.c[k]:.6g}), denominator {dd:.3g}"
            )
        return dd


# ---------------------------------------------------------------------------
# cut-off and flat decompositions


def conical_cutoff(t, x1, x2) -> dict[str, np.ndarray]:
    """chi_hat = 1 - chi(r/t - 2) with first derivatives and box chi_hat."""
    t = np.asarray(t, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(x1, x2)
    z = r / t - 2.0
    c0 = np.asarray(foliation.chi(z))
    c1 = np.asarray(foliation.chi_d1(z))
    c2 = np.asarray(foliation.chi_d2(z))
    safe = np.where(r > 0, r, 1.0)
    z_t = -r / t**2
    z_tt = 2.0 * r / t**3
    z_1 = np.where(r > 0, x1 / (safe * t), 0.0)
    z_2 = np.where(r > 0, x2 / (safe * t), 0.0)
    lap_z = np.where(r > 0, 1.0 / (safe * t), 0.0)
    grad2 = z_1**2 + z_2**2
    return {
        "value": 1.0 - c0,
        "dt": -c1 * z_t,
        "d1": -c1 * z_1,
        "d2": -c1 * z_2,
        "box": -(c2 * (z_t**2 - grad2) + c1 * (z_tt - lap_z)),
    }


def cutoff_bound_constant(t, x1, x2) -> float:
    """Smallest C with |d chi_hat| <= C <r + t>^-1 on the sample."""
    cc = conical_cutoff(t, x1, x2)
    grad = np.sqrt(cc["dt"] ** 2 + cc["d1"] ** 2 + cc["d2"] ** 2)
    w = np.sqrt(1.0 + (np.hypot(x1, x2) + np.asarray(t)) ** 2)
    return float(np.max(grad * w))


def _boosts(jet: Mapping[str, np.ndarray], t, x1, x2):
    """L_a u and L_a d_t u for a = 1, 2."""
    L = (x1 * jet["ut"] + t * jet["u1"], x2 * jet["ut"] + t * jet["u2"])
    Lt = (x1 * jet["utt"] + t * jet["ut1"], x2 * jet["utt"] + t * jet["ut2"])
    return L, Lt


def flat_wave_decomposition(jet: Mapping[str, np.ndarray], t, x1, x2):
    """Split box u = g u_tt + A_m[u] / t; returns (g u_tt, A_m[u]).

    A_m[u] = sum_a [2 (x^a/t) d_t L_a u - dl_a L_a u - (x^a/t) dl_a u]
             + (2 + r^2/t^2) u_t,  with dl_a = L_a / t.
    """
    t = np.asarray(t, dtype=float)
    r2 = x1 * x1 + x2 * x2
    g = (t * t - r2) / (t * t)
    xs = (x1, x2)
    ua = (jet["u1"], jet["u2"])
    uta = (jet["ut1"], jet["ut2"])
    uaa = (jet["u11"], jet["u22"])
    am = (2.0 + r2 / (t * t)) * jet["ut"]
    for a in range(2):
        xa = xs[a]
        dtLa = xa * jet["utt"] + ua[a] + t * uta[a]
        LaLa = xa * xa * jet["utt"] + xa * ua[a] + 2.0 * t * xa * uta[a] + t * jet["ut"] + t * t * uaa[a]
        dl_a_u = ua[a] + xa / t * jet["ut"]
        am = am + 2.0 * xa / t * dtLa - LaLa / t - xa / t * dl_a_u
    return g * jet["utt"], am


def good_null_form(ju: Mapping[str, np.ndarray], jv: Mapping[str, np.ndarray], t, x1, x2,
                   dt_level: bool = False) -> np.ndarray:
    """The good part (x^a/t^2)(u_t L_a v + v_t L_a u) - t^-2 sum_a L_a u L_a v.

    With dt_level=True the arguments are d_t u and d_t v.
    """
    Lu, Ltu = _boosts(ju, t, x1, x2)
    Lv, Ltv = _boosts(jv, t, x1, x2)
    if dt_level:
        Lu, Lv = Ltu, Ltv
        ut, vt = ju["utt"], jv["utt"]
    else:
        ut, vt = ju["ut"], jv["ut"]
    t2 = np.asarray(t, dtype=float) ** 2
    xs = (x1, x2)
    out = np.zeros(np.broadcast(t, x1).shape)
    for a in range(2):
        out = out + xs[a] / t2 * (ut * Lv[a] + vt * Lu[a]) - Lu[a] * Lv[a] / t2
    return out


def null_form(ju, jv) -> np.ndarray:
    """m(du, dv) = u_t v_t - grad u . grad v."""
    return ju["ut"] * jv["ut"] - ju["u1"] * jv["u1"] - ju["u2"] * jv["u2"]


# ---------------------------------------------------------------------------
# auxiliaries


@dataclass
class AuxiliaryFields:
    """Closed-form auxiliaries and remainders on a point set.

    Tilde quantities are keyed (j, k); combined ones and remainders (i, j, k).
    """

    vt0: dict = field(default_factory=dict)
    vt1: dict = field(default_factory=dict)
    vt2: dict = field(default_factory=dict)
    v0: dict = field(default_factory=dict)
    v1: dict = field(default_factory=dict)
    v2: dict = field(default_factory=dict)
    Rt0: dict = field(default_factory=dict)
    Rt1: dict = field(default_factory=dict)
    Rt2: dict = field(default_factory=dict)
    R0: dict = field(default_factory=dict)
    R1: dict = field(default_factory=dict)
    R2: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    chi_hat: np.ndarray | None = None

    def all_finite(self) -> bool:
        for name in ("vt0", "vt1", "vt2", "v0", "v1", "v2", "R0", "R1", "R2", "w"):
            for arr in getattr(self, name).values():
                if not np.all(np.isfinite(arr)):
                    return False
        return True


def _tilde(jets, ctx, t, x1, x2, with_remainders: bool):
    m = ctx.m
    c2 = ctx.c2
    t = np.asarray(t, dtype=float)
    r2 = x1 * x1 + x2 * x2
    g = (t * t - r2) / (t * t)
    out = {"vt0": {}, "vt1": {}, "vt2": {}, "Rt0": {}, "Rt1": {}, "Rt2": {}}
    if with_remainders:
        Am = [flat_wave_decomposition(jets[j], t, x1, x2)[1] for j in range(m)]
        g_t = 2.0 * r2 / t**3
        g_a = (-2.0 * x1 / t**2, -2.0 * x2 / t**2)
        box_g = -6.0 * r2 / t**4 + 4.0 / t**2
    for j in range(m):
        vj = jets[j]
        for k in range(m):
            vk = jets[k]
            out["vt0"][j, k] = vj["u"] * vk["u"]
            out["vt1"][j, k] = vj["u"] * vk["ut"]
            out["vt2"][j, k] = g * vj["ut"] * vk["ut"]
            if not with_remainders:
                continue
            mlow = good_null_form(vj, vk, t, x1, x2)
            out["Rt0"][j, k] = 2.0 * mlow + vj["u"] * vk["f"] + vk["u"] * vj["f"]
            out["Rt1"][j, k] = (
                vj["f"] * vk["ut"] + vj["u"] * vk["ft"] + 2.0 * vj["ut"] * vk["f"]
                + 2.0 * _mlow_mixed(vj, vk, t, x1, x2)
                - 2.0 / t * vj["ut"] * Am[k]
            )
            w = vj["ut"] * vk["ut"]
            w_t = vj["utt"] * vk["ut"] + vj["ut"] * vk["utt"]
            w_a = (vj["ut1"] * vk["ut"] + vj["ut"] * vk["ut1"], vj["ut2"] * vk["ut"] + vj["ut"] * vk["ut2"])
            m_gw = g_t * w_t - g_a[0] * w_a[0] - g_a[1] * w_a[1]
            out["Rt2"][j, k] = (
                w * box_g + 2.0 * m_gw
                - 2.0 * c2[k] * vk["u"] * vj["f"]
                + 2.0 / t * c2[k] * vk["u"] * Am[j]
                + g * (
                    2.0 * good_null_form(vj, vk, t, x1, x2, dt_level=True)
                    + vj["ut"] * vk["ft"] + vk["ut"] * vj["ft"]
                    + 2.0 * vj["utt"] * vk["f"]
                    - 2.0 / t * vj["utt"] * Am[k]
                )
            )
    return out


def _mlow_mixed(ju, jv, t, x1, x2):
    """Good part of m(du, d d_t v)."""
    Lu, _ = _boosts(ju, t, x1, x2)
    _, Ltv = _boosts(jv, t, x1, x2)
    t2 = np.asarray(t, dtype=float) ** 2
    xs = (x1, x2)
    out = np.zeros(np.broadcast(t, x1).shape)
    for a in range(2):
        out = out + xs[a] / t2 * (ju["ut"] * Ltv[a] + jv["utt"] * Lu[a]) - Lu[a] * Ltv[a] / t2
    return out


def build_auxiliaries(ctx: NormalFormContext, jets: Sequence[Mapping[str, np.ndarray]], t, x1, x2,
                      with_remainders: bool = True) -> AuxiliaryFields:
    """All auxiliaries (and remainders when the jets carry second derivatives and f, ft)."""
    if len(jets) != ctx.m:
        raise ValueError(f"expected {ctx.m} jets, got {len(jets)}")
    c2 = ctx.c2
    til = _tilde(jets, ctx, t, x1, x2, with_remainders)
    aux = AuxiliaryFields(vt0=til["vt0"], vt1=til["vt1"], vt2=til["vt2"],
                          Rt0=til["Rt0"], Rt1=til["Rt1"], Rt2=til["Rt2"])
    for i, j, k in ctx.triples():
        dd = ctx.check(i, j, k)
        D = ctx.D(i, j, k)
        aux.v0[i, j, k] = (D * til["vt0"][j, k] - 2.0 * til["vt2"][j, k]) / dd
        aux.v2[i, j, k] = (D * til["vt2"][j, k] - 2.0 * c2[j] * c2[k] * til["vt0"][j, k]) / dd
        aux.v1[i, j, k] = (D * til["vt1"][j, k] + 2.0 * c2[k] * til["vt1"][k, j]) / dd
        if with_remainders:
            aux.R0[i, j, k] = (D * til["Rt0"][j, k] - 2.0 * til["Rt2"][j, k]) / dd
            aux.R2[i, j, k] = (D * til["Rt2"][j, k] - 2.0 * c2[j] * c2[k] * til["Rt0"][j, k]) / dd
            aux.R1[i, j, k] = (D * til["Rt1"][j, k] + 2.0 * c2[k] * til["Rt1"][k, j]) / dd
    return aux


def identity_rhs(ctx: NormalFormContext, jets, aux: AuxiliaryFields, t, x1, x2) -> dict:
    """Right-hand sides of the five defining identities, keyed (name, i, j, k)."""
    c2 = ctx.c2
    out = {}
    for i, j, k in ctx.triples():
        vj, vk = jets[j], jets[k]
        D = ctx.D(i, j, k)
        out["vt0", i, j, k] = D * vj["u"] * vk["u"] + 2.0 * aux.vt2[j, k] + aux.Rt0[j, k]
        out["vt2", i, j, k] = 2.0 * c2[j] * c2[k] * vj["u"] * vk["u"] + D * aux.vt2[j, k] + aux.Rt2[j, k]
        out["vt1", i, j, k] = D * vj["u"] * vk["ut"] - 2.0 * c2[k] * vk["u"] * vj["ut"] + aux.Rt1[j, k]
        out["v0", i, j, k] = vj["u"] * vk["u"] + aux.R0[i, j, k]
        out["v1", i, j, k] = vj["u"] * vk["ut"] + aux.R1[i, j, k]
    return out


def _lhs_value(name: str, aux: AuxiliaryFields, i, j, k):
    if name in ("vt0", "vt1", "vt2"):
        return getattr(aux, name)[j, k]
    return getattr(aux, name)[i, j, k]


_STENCIL = ((0.0, 0.0, 0.0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def _stencil_box(values: Sequence[np.ndarray], h: float, c2: float) -> np.ndarray:
    """Second-order (box + c^2) from values on the 7-point stencil."""
    f0, tp, tm, ap, am, bp, bm = values
    return (tp - 2 * f0 + tm) / h**2 - (ap - 2 * f0 + am) / h**2 - (bp - 2 * f0 + bm) / h**2 + c2 * f0


def verify_identities(ctx: NormalFormContext, jet_fn: Callable, t, x1, x2,
                      hs: Sequence[float] = (0.04, 0.02, 0.01)) -> dict:
    """Finite-difference residuals of the five identities at sample points.

    jet_fn(t, x1, x2) returns the list of jets.  (box + c_i^2) of each
    auxiliary is taken with the second-order 7-point stencil of spacing h;
    the right-hand sides are evaluated in closed form at the centre.
    Returns, per identity, the max residual for each h and observed orders.
    """
    t = np.asarray(t, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    jets0 = jet_fn(t, x1, x2)
    aux0 = build_auxiliaries(ctx, jets0, t, x1, x2)
    rhs = identity_rhs(ctx, jets0, aux0, t, x1, x2)
    report = {name: {"h": list(hs), "residual": []} for name in IDENTITIES}
    for h in hs:
        auxs = [aux0]
        for dt_, d1_, d2_ in _STENCIL[1:]:
            tt, a1, a2 = t + dt_ * h, x1 + d1_ * h, x2 + d2_ * h
            auxs.append(build_auxiliaries(ctx, jet_fn(tt, a1, a2), tt, a1, a2, with_remainders=False))
        worst = {name: 0.0 for name in IDENTITIES}
        for i, j, k in ctx.triples():
            for name in IDENTITIES:
                vals = [_lhs_value(name, a, i, j, k) for a in auxs]
                res = _stencil_box(vals, h, ctx.c2[i]) - rhs[name, i, j, k]
                worst[name] = max(worst[name], float(np.max(np.abs(res))))
        for name in IDENTITIES:
            report[name]["residual"].append(worst[name])
    for name in IDENTITIES:
        e = np.asarray(report[name]["residual"])
        with np.errstate(divide="ignore", invalid="ignore"):
            report[name]["orders"] = [float(v) for v in np.log2(e[:-1] / e[1:])]
    return report


# ---------------------------------------------------------------------------
# transform


def transform(ctx: NormalFormContext, jets, t, x1, x2, aux: AuxiliaryFields | None = None):
    """w_i = v_i - chi_hat (A_i^{jk} v0_ijk + B_i^{jk} v1_ijk); returns (w, Q, aux)."""
    aux = build_auxiliaries(ctx, jets, t, x1, x2, with_remainders=False) if aux is None else aux
    ch = conical_cutoff(t, x1, x2)["value"]
    Q, w = [], []
    for i in range(ctx.m):
        q = np.zeros(np.broadcast(t, x1).shape)
        for j in range(ctx.m):
            for k in range(ctx.m):
                if ctx.A[i, j, k]:
                    q = q + ctx.A[i, j, k] * aux.v0[i, j, k]
                if ctx.B[i, j, k]:
                    q = q + ctx.B[i, j, k] * aux.v1[i, j, k]
        Q.append(q)
        w.append(jets[i]["u"] - ch * q)
    aux.w = dict(enumerate(w))
    aux.chi_hat = ch
    return w, Q, aux


def _quadratic(ctx, jets, i):
    q = np.zeros_like(jets[0]["u"])
    for j in range(ctx.m):
        for k in range(ctx.m):
            q = q + ctx.A[i, j, k] * jets[j]["u"] * jets[k]["u"] + ctx.B[i, j, k] * jets[j]["u"] * jets[k]["ut"]
    return q


def transform_check(ctx: NormalFormContext, jet_fn: Callable, t, x1, x2,
                    hs: Sequence[float] = (0.04, 0.02, 0.01)) -> dict:
    """Residual of the transformed equation under finite differences.

    With f_i = F_i - (A v v + B v d_t v) the transformed field obeys
        (box + c_i^2) w_i = (1 - chi_hat)(A v v + B v d_t v) + f_i
                            - chi_hat (A R0 + B R1) - Q box chi_hat - 2 m(d chi_hat, dQ),
    Q = A v0 + B v1.  Reported per h: max residual overall, the same on
    {r <= 2t}, and the largest quadratic term (1 - chi_hat) (...) on {r <= 2t}.
    """
    t = np.asarray(t, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    jets0 = jet_fn(t, x1, x2)
    aux0 = build_auxiliaries(ctx, jets0, t, x1, x2)
    w0, Q0, _ = transform(ctx, jets0, t, x1, x2, aux0)
    cc = conical_cutoff(t, x1, x2)
    inner = np.hypot(x1, x2) <= 2.0 * t
    report = {"h": list(hs), "residual": [], "residual_inner": [], "quadratic_inner": 0.0}
    for h in hs:
        ws, Qs = [w0], [Q0]
        for dt_, d1_, d2_ in _STENCIL[1:]:
            tt, a1, a2 = t + dt_ * h, x1 + d1_ * h, x2 + d2_ * h
            w_, q_, _ = transform(ctx, jet_fn(tt, a1, a2), tt, a1, a2)
            ws.append(w_)
            Qs.append(q_)
        worst, worst_in = 0.0, 0.0
        for i in range(ctx.m):
            lhs = _stencil_box([w[i] for w in ws], h, ctx.c2[i])
            quad = _quadratic(ctx, jets0, i)
            f_i = jets0[i]["f"] - quad
            rem = np.zeros_like(f_i)
            for j in range(ctx.m):
                for k in range(ctx.m):
                    rem = rem + ctx.A[i, j, k] * aux0.R0[i, j, k] + ctx.B[i, j, k] * aux0.R1[i, j, k]
            q = [Qv[i] for Qv in Qs]
            dQ = ((q[1] - q[2]) / (2 * h), (q[3] - q[4]) / (2 * h), (q[5] - q[6]) / (2 * h))
            m_chiQ = cc["dt"] * dQ[0] - cc["d1"] * dQ[1] - cc["d2"] * dQ[2]
            rhs = (1.0 - cc["value"]) * quad + f_i - cc["value"] * rem - Q0[i] * cc["box"] - 2.0 * m_chiQ
            res = np.abs(lhs - rhs)
            worst = max(worst, float(res.max()))
            if inner.any():
                worst_in = max(worst_in, float(res[inner].max()))
                report["quadratic_inner"] = max(report["quadratic_inner"],
                                                float(np.max(np.abs((1.0 - cc["value"]) * quad)[inner])))
        report["residual"].append(worst)
        report["residual_inner"].append(worst_in)
    e = np.asarray(report["residual"])
    report["orders"] = [float(v) for v in np.log2(e[:-1] / e[1:])]
    return report
