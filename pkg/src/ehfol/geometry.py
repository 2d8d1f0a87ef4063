"""Curvature of the example target manifolds and the induced PDE coefficients.

Index conventions
-----------------
Target coordinates are 0-based: index 0 is the geodesic direction x^1, the
rest are transversal.  ``riemann[i, j, k, l]`` stores R^i_{jkl} with

    R^i_{jkl} = d_j G^i_{kl} - d_k G^i_{jl} + G^i_{jm} G^m_{kl} - G^i_{km} G^m_{jl},

i.e. (nabla_j nabla_k - nabla_k nabla_j) d_l = R^i_{jkl} d_i, so that
kappa_ii = R^i_{i11} in geodesic normal coordinates.

Spacetime covectors use the signature m = diag(-1, 1, 1); rho = m(dphi_S, dphi_S)
is negative for time-like phi_S.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "Profile",
    "torus_profile",
    "RevolutionSurface",
    "R4Metric",
    "CausalType",
    "GeodesicSpec",
    "CurvatureData",
    "CubicTensors",
    "SystemCoefficients",
    "StabilityReport",
    "MINKOWSKI_PART_I",
    "revolution_christoffel",
    "revolution_riemann",
    "metric_christoffel",
    "metric_riemann",
    "r4_curvature",
    "curvature",
    "classify_stability",
    "check_nonresonance",
    "resonance_set_pair",
    "system_coefficients",
    "preset",
]

MINKOWSKI_PART_I = np.diag([-1.0, 1.0, 1.0])


class GeometryError(ValueError):
    """Invalid manifold data or an unstable/degenerate configuration."""


# ---------------------------------------------------------------------------
# manifolds


@dataclass(frozen=True)
class Profile:
    """Radius profile A(x^2) of a surface of revolution with its derivatives."""

    A: Callable[[float], float]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    d3: Callable[[float], float]
    d4: Callable[[float], float] | None = None


def torus_profile() -> Profile:
    """A(x) = 2 + cos(x + pi) = 2 - cos x: the inner equator of the 2-torus."""
    return Profile(
        A=lambda x: 2.0 - math.cos(x),
        d1=math.sin,
        d2=math.cos,
        d3=lambda x: -math.sin(x),
        d4=lambda x: -math.cos(x),
    )


@dataclass(frozen=True)
class RevolutionSurface:
    profile: Profile
    name: str = "revolution"
    n: int = 2

    def __post_init__(self):
        if abs(self.profile.A(0.0) - 1.0) > 1e-14 or abs(self.profile.d1(0.0)) > 1e-14:
            raise GeometryError("surface of revolution needs A(0) = 1 and A'(0) = 0")

    def metric(self, x: Sequence[float]):
        a, da, dda = self.profile.A(x[1]), self.profile.d1(x[1]), self.profile.d2(x[1])
        g = np.diag([a * a, 1.0])
        dg = np.zeros((2, 2, 2))
        dg[1, 0, 0] = 2.0 * a * da
        ddg = np.zeros((2, 2, 2, 2))
        ddg[1, 1, 0, 0] = 2.0 * (da * da + a * dda)
        return g, dg, ddg


@dataclass(frozen=True)
class R4Metric:
    """g = [[A^2, 0, B], [0, 1, 0], [B, 0, 1]] with
    A = 1 + sign (x2^2 + lambda x3^2)/2 and B = x2^2."""

    lam: float
    sign: int = 1
    name: str = "r4"
    n: int = 3

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise GeometryError("sign must be +1 or -1")

    def metric(self, x: Sequence[float]):
        _, x2, x3 = x
        sg, lam = float(self.sign), float(self.lam)
        a = 1.0 + 0.5 * sg * (x2 * x2 + lam * x3 * x3)
        a2, a3 = sg * x2, sg * lam * x3  # dA/dx2, dA/dx3
        b = x2 * x2
        g = np.array([[a * a, 0.0, b], [0.0, 1.0, 0.0], [b, 0.0, 1.0]])
        dg = np.zeros((3, 3, 3))
        dg[1, 0, 0] = 2.0 * a * a2
        dg[2, 0, 0] = 2.0 * a * a3
        dg[1, 0, 2] = dg[1, 2, 0] = 2.0 * x2
        ddg = np.zeros((3, 3, 3, 3))
        ddg[1, 1, 0, 0] = 2.0 * (a2 * a2 + a * sg)
        ddg[2, 2, 0, 0] = 2.0 * (a3 * a3 + a * sg * lam)
        ddg[1, 2, 0, 0] = ddg[2, 1, 0, 0] = 2.0 * a2 * a3
        ddg[1, 1, 0, 2] = ddg[1, 1, 2, 0] = 2.0
        return g, dg, ddg


# ---------------------------------------------------------------------------
# curvature


def revolution_christoffel(profile: Profile, x2: float) -> np.ndarray:
    """Gamma[i, j, k] = G^i_{jk} of the metric A(x2)^2 (dx1)^2 + (dx2)^2."""
    a = profile.A(x2)
    if a == 0.0:
        raise GeometryError(f"A vanishes at x2={x2}: singular chart")
    da = profile.d1(x2)
    gam = np.zeros((2, 2, 2))
    gam[0, 0, 1] = gam[0, 1, 0] = da / a
    gam[1, 0, 0] = -da * a
    return gam


def revolution_riemann(profile: Profile, x2: float) -> np.ndarray:
    a = profile.A(x2)
    if a == 0.0:
        raise GeometryError(f"A vanishes at x2={x2}: singular chart")
    dda = profile.d2(x2)
    rie = np.zeros((2, 2, 2, 2))
    rie[0, 0, 1, 1] = -dda / a
    rie[0, 1, 0, 1] = dda / a
    rie[1, 0, 1, 0] = dda * a
    rie[1, 1, 0, 0] = -dda * a
    return rie


def metric_christoffel(g, dg) -> np.ndarray:
    """Christoffel symbols from g_{ij} and dg[k, i, j] = d_k g_{ij}."""
    gi = np.linalg.inv(g)
    # lowered: G_{m jk} = (d_j g_{mk} + d_k g_{mj} - d_m g_{jk}) / 2
    low = 0.5 * (
        np.einsum("jmk->mjk", dg) + np.einsum("kmj->mjk", dg) - dg
    )
    return np.einsum("im,mjk->ijk", gi, low)


def metric_riemann(g, dg, ddg) -> np.ndarray:
    """R^i_{jkl} from the metric and its first and second derivatives."""
    gi = np.linalg.inv(g)
    dgi = -np.einsum("ia,nab,bj->nij", gi, dg, gi)
    low = 0.5 * (np.einsum("jmk->mjk", dg) + np.einsum("kmj->mjk", dg) - dg)
    dlow = 0.5 * (
        np.einsum("njmk->nmjk", ddg) + np.einsum("nkmj->nmjk", ddg) - ddg
    )
    gam = np.einsum("im,mjk->ijk", gi, low)
    # dgam[n, i, j, k] = d_n G^i_{jk}
    dgam = np.einsum("nim,mjk->nijk", dgi, low) + np.einsum("im,nmjk->nijk", gi, dlow)
    rie = (
        np.einsum("jikl->ijkl", dgam)
        - np.einsum("kijl->ijkl", dgam)
        + np.einsum("ijm,mkl->ijkl", gam, gam)
        - np.einsum("ikm,mjl->ijkl", gam, gam)
    )
    return rie


@dataclass(frozen=True)
class CurvatureData:
    """Curvature along the geodesic gamma = {x_transversal = 0}.

    ``christoffel`` and ``riemann`` evaluate at a transversal position (and
    any x^1, which they ignore); ``riemann_gamma`` is the value on gamma and
    ``dd_gamma_11[i, j, k]`` = d_j d_k G^i_{11} on gamma (transversal j, k).
    """

    kappa_eigs: tuple[float, ...]
    kappa_matrix: np.ndarray
    riemann_gamma: np.ndarray
    dd_gamma_11: np.ndarray
    christoffel: Callable[..., np.ndarray]
    riemann: Callable[..., np.ndarray]
    degenerate: bool = False


def _kappa_from(rie: np.ndarray) -> np.ndarray:
    n = rie.shape[0]
    # kappa_{ij} = R_{i11j} = g_{jm} R^m_{i11}, and g = identity on gamma
    return np.array([[rie[j, i, 0, 0] for j in range(1, n)] for i in range(1, n)])


def _dd_gamma_11_revolution(profile: Profile) -> np.ndarray:
    # G^2_11 = -A'A so d2 d2 G^2_11 = -(A'''A + 3A''A') = -A'''(0) on gamma
    out = np.zeros((2, 2, 2))
    out[1, 1, 1] = -(profile.d3(0.0) * profile.A(0.0) + 3.0 * profile.d2(0.0) * profile.d1(0.0))
    return out


def _dd_gamma_11_r4(man: R4Metric) -> np.ndarray:
    # G^i_11 is odd and cubic at worst in (x2, x3) for this metric, so its
    # second derivatives on gamma vanish; checked against finite differences
    # of metric_christoffel in the tests.
    return np.zeros((3, 3, 3))


def curvature(man) -> CurvatureData:
    if isinstance(man, RevolutionSurface):
        p = man.profile
        rie = revolution_riemann(p, 0.0)

        def chris(x2, x1=0.0):
            return revolution_christoffel(p, x2)

        def riem(x2, x1=0.0):
            return revolution_riemann(p, x2)

        dd = _dd_gamma_11_revolution(p)
    elif isinstance(man, R4Metric):
        return r4_curvature(man.lam, man.sign)
    else:
        raise GeometryError(f"unknown manifold {man!r}")
    kap = _kappa_from(rie)
    eigs = tuple(float(k) for k in np.diag(kap))
    return CurvatureData(
        kappa_eigs=eigs,
        kappa_matrix=kap,
        riemann_gamma=rie,
        dd_gamma_11=dd,
        christoffel=chris,
        riemann=riem,
        degenerate=any(k == 0.0 for k in eigs),
    )


def _r4_riemann_gamma(lam: float, sign: int) -> np.ndarray:
    """Closed-form R^i_{jkl} on gamma for the R^4 example metric."""
    s, L = float(sign), float(lam)
    rie = np.zeros((3, 3, 3, 3))
    entries = {
        (0, 0, 1, 1): -s, (0, 1, 0, 1): s,
        (0, 0, 2, 2): -L * s, (0, 2, 0, 2): L * s,
        (0, 1, 2, 1): 1.0, (0, 2, 1, 1): -1.0,
        (1, 0, 1, 0): s, (1, 1, 0, 0): -s,
        (1, 0, 1, 2): 1.0, (1, 1, 0, 2): -1.0,
        (1, 1, 2, 0): -1.0, (1, 2, 1, 0): 1.0,
        (2, 0, 1, 1): -1.0, (2, 1, 0, 1): 1.0,
        (2, 0, 2, 0): L * s, (2, 2, 0, 0): -L * s,
    }
    for idx, val in entries.items():
        rie[idx] = val
    return rie


def r4_curvature(lam: float, sign: int) -> CurvatureData:
    """Curvature of the three-dimensional example with non-vanishing F.

    kappa = (-sign, -sign*lambda) and R^3_{212} = B''(0)/2 = 1 on gamma.
    """
    man = R4Metric(lam, sign)
    rie = _r4_riemann_gamma(lam, sign)
    kap = _kappa_from(rie)
    eigs = tuple(float(k) for k in np.diag(kap))

    def chris(x2, x3=0.0, x1=0.0):
        g, dg, _ = man.metric((x1, x2, x3))
        return metric_christoffel(g, dg)

    def riem(x2, x3=0.0, x1=0.0):
        return metric_riemann(*man.metric((x1, x2, x3)))

    return CurvatureData(
        kappa_eigs=eigs,
        kappa_matrix=kap,
        riemann_gamma=rie,
        dd_gamma_11=_dd_gamma_11_r4(man),
        christoffel=chris,
        riemann=riem,
        degenerate=any(k == 0.0 for k in eigs),
    )


# ---------------------------------------------------------------------------
# stability and resonance


class CausalType(enum.Enum):
    TIME_LIKE = "time-like"
    NULL = "null"
    SPACE_LIKE = "space-like"


@dataclass(frozen=True)
class GeodesicSpec:
    """Constant differential (d_t, d_1, d_2) of the affine map phi_S."""

    dphiS: tuple[float, float, float]

    @property
    def rho(self) -> float:
        p = np.asarray(self.dphiS, dtype=float)
        return float(p @ MINKOWSKI_PART_I @ p)

    @property
    def causal_type(self) -> CausalType:
        r = self.rho
        if r < 0:
            return CausalType.TIME_LIKE
        if r > 0:
            return CausalType.SPACE_LIKE
        return CausalType.NULL

    @property
    def raised(self) -> np.ndarray:
        """m^{alpha beta} d_beta phi_S."""
        return MINKOWSKI_PART_I @ np.asarray(self.dphiS, dtype=float)

    @classmethod
    def from_rho(cls, rho: float) -> "GeodesicSpec":
        """Canonical differential with the given rho: spatial if rho >= 0."""
        a = math.sqrt(abs(rho))
        return cls((a, 0.0, 0.0) if rho < 0 else (0.0, a, 0.0))


@dataclass(frozen=True)
class StabilityReport:
    causal_type: CausalType
    rho: float
    kappa_eigs: tuple[float, ...]
    c2: tuple[float, ...]
    space_like_stable: bool
    time_like_stable: bool
    stable: bool
    note: str


def classify_stability(spec: GeodesicSpec, curv: CurvatureData) -> StabilityReport:
    eigs = curv.kappa_eigs
    rho = spec.rho
    c2 = tuple(-rho * k for k in eigs)
    sl = all(k < 0 for k in eigs)
    tl = all(k > 0 for k in eigs)
    ct = spec.causal_type
    if ct is CausalType.NULL:
        note = "null: masses vanish"
        stable = False
    else:
        stable = all(c > 0 for c in c2)
        note = "all masses positive" if stable else "negative or zero mass squared"
    return StabilityReport(ct, rho, eigs, c2, sl, tl, stable, note)


def check_nonresonance(eigs: Sequence[float], rtol: float = 1e-12) -> dict:
    """Test sqrt|l_i| + sqrt|l_j| != sqrt|l_k| over all ordered triples.

    Repeated indices are included: {1, 4} is resonant through 1 + 1 = 2.
    """
    eigs = [float(e) for e in eigs]
    if any(e == 0.0 for e in eigs):
        raise GeometryError("zero eigenvalue: excluded from the non-resonance condition")
    root = [math.sqrt(abs(e)) for e in eigs]
    witnesses = []
    m = len(eigs)
    for i, j, k in itertools.product(range(m), repeat=3):
        if i > j:
            continue
        lhs, rhs = root[i] + root[j], root[k]
        if abs(lhs - rhs) <= rtol * max(lhs, rhs):
            witnesses.append((i, j, k))
    return {"resonant": bool(witnesses), "witnesses": witnesses}


def resonance_set_pair() -> list[float]:
    """All lambda > 0, lambda != 1, for which {1, lambda} fails non-resonance.

    With roots (1, mu), mu = sqrt(lambda), every ordered triple gives a
    linear equation a + b mu = c + d mu in mu; its positive roots are
    collected and squared.
    """
    found = set()
    for i, j, k in itertools.product(range(2), repeat=3):
        if i > j:
            continue
        # coefficients of 1 and mu on each side
        a = (i == 0) + (j == 0)
        b = (i == 1) + (j == 1)
        c, d = (k == 0), (k == 1)
        if b == d:
            continue
        mu = (c - a) / (b - d)
        if mu > 0 and mu != 1.0:
            found.add(mu * mu)
    return sorted(found)


# ---------------------------------------------------------------------------
# PDE coefficients


@dataclass
class CubicTensors:
    """Cubic couplings, all indices transversal (0-based within the KG block).

    Wave equation:
        P_w[j,k,l] v_j v_k v_l + Q_w[j,k] m(du, dv_j) v_k
        + S_w[j,k,l] m(dv_j, dphi_S) v_k v_l + U_w[j,k,l] m(dv_j, dv_k) v_l
    Klein-Gordon equation i:
        P[i,j,k,l] v_j v_k v_l + G[i,j,k] m(du, dphi_S) v_j v_k
        + H[i,j] m(du, du) v_j
    with m(a, b) = m^{ab} d_a d_b in the signature diag(-1, 1, 1).
    """

    P_w: np.ndarray
    Q_w: np.ndarray
    S_w: np.ndarray
    U_w: np.ndarray
    P: np.ndarray
    G: np.ndarray
    H: np.ndarray

    @classmethod
    def zeros(cls, m: int) -> "CubicTensors":
        return cls(
            P_w=np.zeros((m, m, m)),
            Q_w=np.zeros((m, m)),
            S_w=np.zeros((m, m, m)),
            U_w=np.zeros((m, m, m)),
            P=np.zeros((m, m, m, m)),
            G=np.zeros((m, m, m)),
            H=np.zeros((m, m)),
        )

    def is_zero(self) -> bool:
        return all(not np.any(getattr(self, f)) for f in ("P_w", "Q_w", "S_w", "U_w", "P", "G", "H"))


@dataclass
class SystemCoefficients:
    """Masses and couplings of the wave-Klein-Gordon system.

    Shapes, with m = n_kg and alpha a spacetime index (t, x1, x2):
        c2 (m,), A (3, m) = A^alpha_j, K (m, 3) = K^{i alpha},
        E (m, m, m) = E^i_{jk}, F (m, 3, m, m) = F^{i alpha}_{jk} acting on
        v_j d_alpha v_k.
    """

    n_kg: int
    c2: np.ndarray
    A: np.ndarray
    K: np.ndarray
    E: np.ndarray
    F: np.ndarray
    cubic: CubicTensors = field(default=None)
    dphiS: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rho: float = 0.0

    def __post_init__(self):
        m = self.n_kg
        self.c2 = np.asarray(self.c2, dtype=float).reshape(m)
        self.A = np.asarray(self.A, dtype=float).reshape(3, m)
        self.K = np.asarray(self.K, dtype=float).reshape(m, 3)
        self.E = np.asarray(self.E, dtype=float).reshape(m, m, m)
        self.F = np.asarray(self.F, dtype=float).reshape(m, 3, m, m)
        if self.cubic is None:
            self.cubic = CubicTensors.zeros(m)

    @classmethod
    def free(cls, n_kg: int, c2, A=None) -> "SystemCoefficients":
        """Uncoupled system with the given masses (and optional A tensor)."""
        m = n_kg
        return cls(
            n_kg=m,
            c2=c2,
            A=np.zeros((3, m)) if A is None else A,
            K=np.zeros((m, 3)),
            E=np.zeros((m, m, m)),
            F=np.zeros((m, 3, m, m)),
        )

    @property
    def masses(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.c2, 0.0))

    def to_json(self) -> dict:
        return {
            "n_kg": self.n_kg,
            "c2": self.c2.tolist(),
            "A": self.A.tolist(),
            "K": self.K.tolist(),
            "E": self.E.tolist(),
            "F": self.F.tolist(),
            "rho": self.rho,
            "dphiS": list(self.dphiS),
        }


def _revolution_cubic(profile: Profile, rho: float) -> CubicTensors:
    a2, a3 = profile.d2(0.0), profile.d3(0.0)
    a4 = profile.d4(0.0) if profile.d4 is not None else 0.0
    cub = CubicTensors.zeros(1)
    cub.Q_w[0, 0] = 2.0 * a2
    cub.S_w[0, 0, 0] = a3
    cub.G[0, 0, 0] = -a3
    cub.H[0, 0] = -a2
    cub.P[0, 0, 0, 0] = -rho * (a4 + 3.0 * a2 * a2) / 6.0
    return cub


def system_coefficients(
    man,
    spec: GeodesicSpec,
    taylor_c: float = 0.5,
    require_stable: bool = True,
) -> SystemCoefficients:
    """Coefficients c^2, A, K, E, F (and cubic defaults) for a preset.

    ``taylor_c`` is the constant C^{jk} in front of d_j d_k G^i_{11}; it is
    not tabulated for general manifolds and defaults to the second-order
    Taylor factor 1/2.
    """
    curv = curvature(man)
    rep = classify_stability(spec, curv)
    if require_stable and not rep.stable:
        raise GeometryError(f"configuration not linearly stable: {rep.note}, c2={rep.c2}")
    rie = curv.riemann_gamma
    n = rie.shape[0]
    m = n - 1
    rho = spec.rho
    up = spec.raised
    kap = np.array(curv.kappa_eigs)
    A = -np.outer(up, kap)
    K = np.zeros((m, 3))
    E = np.zeros((m, m, m))
    F = np.zeros((m, 3, m, m))
    for i in range(m):
        K[i] = 2.0 * rie[i + 1, i + 1, 0, 0] * up
        for j in range(m):
            for k in range(m):
                E[i, j, k] = rho * taylor_c * curv.dd_gamma_11[i + 1, j + 1, k + 1]
                F[i, :, j, k] = 2.0 * rie[i + 1, k + 1, 0, j + 1] * up
    cubic = (
        _revolution_cubic(man.profile, rho)
        if isinstance(man, RevolutionSurface)
        else CubicTensors.zeros(m)
    )
    # adding 0.0 folds negative zeros so reports print 0.0
    return SystemCoefficients(
        n_kg=m,
        c2=-rho * kap + 0.0,
        A=A + 0.0,
        K=K + 0.0,
        E=E + 0.0,
        F=F + 0.0,
        cubic=cubic,
        dphiS=tuple(float(v) for v in spec.dphiS),
        rho=rho,
    )


def preset(name: str, lam: float = 3.0, sign: int = -1, profile: Profile | None = None):
    """Manifold preset by name: 'torus', 'revolution' or 'r4'."""
    if name == "torus":
        return RevolutionSurface(torus_profile(), name="torus")
    if name == "revolution":
        if profile is None:
            # A = 1 - x^2/2 + x^3/6: A''(0) = -1, A'''(0) = 1
            profile = Profile(
                A=lambda x: 1.0 - 0.5 * x * x + x**3 / 6.0,
                d1=lambda x: -x + 0.5 * x * x,
                d2=lambda x: -1.0 + x,
                d3=lambda x: 1.0,
                d4=lambda x: 0.0,
            )
        return RevolutionSurface(profile, name="revolution")
    if name == "r4":
        return R4Metric(lam, sign)
    raise GeometryError(f"unknown preset {name!r}")
