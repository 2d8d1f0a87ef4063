import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ehfol import geometry as geo


def sympy_riemann(metric, coords, point):
    """R^i_{jkl} at a point, straight from the Christoffel symbols."""
    n = len(coords)
    g = sp.Matrix(metric)
    gi = g.inv()
    gam = [[[sum(gi[i, m] * (sp.diff(g[m, j], coords[k]) + sp.diff(g[m, k], coords[j])
                             - sp.diff(g[j, k], coords[m])) for m in range(n)) / 2
             for k in range(n)] for j in range(n)] for i in range(n)]
    out = np.zeros((n, n, n, n))
    at = dict(zip(coords, point))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    e = (sp.diff(gam[i][k][l], coords[j]) - sp.diff(gam[i][j][l], coords[k])
                         + sum(gam[i][j][m] * gam[m][k][l] - gam[i][k][m] * gam[m][j][l] for m in range(n)))
                    out[i, j, k, l] = float(e.subs(at))
    return out, gam


X1, X2, X3 = sp.symbols("x1 x2 x3", real=True)


class TestRevolution:
    def test_torus_curvature_exact(self):
        curv = geo.curvature(geo.preset("torus"))
        assert curv.kappa_eigs == (-1.0,)
        assert curv.kappa_matrix[0, 0] == -1.0

    def test_torus_coefficients(self):
        c = geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec.from_rho(1.0))
        assert c.c2.tolist() == [1.0]
        assert np.all(c.E == 0.0)
        assert np.all(c.F == 0.0)
        # A = -kappa m dphi_S and K = 2 R^2_{211} m dphi_S with R^2_{211} = -A''(0) = -1
        up = geo.GeodesicSpec.from_rho(1.0).raised
        assert np.array_equal(c.A[:, 0], up)
        assert np.array_equal(c.K[0], -2.0 * up)

    @pytest.mark.parametrize("x2", [0.0, 0.3, -1.1])
    def test_closed_form_matches_generic_engine(self, x2):
        man = geo.preset("torus")
        g, dg, ddg = man.metric((0.0, x2))
        assert np.allclose(geo.metric_riemann(g, dg, ddg), geo.revolution_riemann(man.profile, x2), atol=1e-13)
        assert np.allclose(geo.metric_christoffel(g, dg), geo.revolution_christoffel(man.profile, x2), atol=1e-14)

    def test_torus_sympy_oracle(self):
        a = 2 - sp.cos(X2)
        rie, _ = sympy_riemann([[a**2, 0], [0, 1]], [X1, X2], [0.0, 0.4])
        assert np.allclose(rie, geo.revolution_riemann(geo.torus_profile(), 0.4), atol=1e-13)

    def test_second_derivative_of_gamma(self):
        man = geo.preset("revolution")
        curv = geo.curvature(man)
        # G^2_11 = -A A'; its second derivative at 0 is -A'''(0) when A' (0) = 0
        assert curv.dd_gamma_11[1, 1, 1] == pytest.approx(-1.0)

    def test_revolution_cubic_defaults(self):
        c = geo.system_coefficients(geo.preset("revolution"), geo.GeodesicSpec.from_rho(-2.0))
        cub = c.cubic
        assert cub.Q_w[0, 0] == -2.0 and cub.H[0, 0] == 1.0
        assert cub.S_w[0, 0, 0] == 1.0 and cub.G[0, 0, 0] == -1.0

    def test_profile_normalisation_enforced(self):
        bad = geo.Profile(A=lambda x: 2.0, d1=lambda x: 0.0, d2=lambda x: 0.0, d3=lambda x: 0.0)
        with pytest.raises(geo.GeometryError):
            geo.RevolutionSurface(bad)


class TestR4:
    @pytest.mark.parametrize("lam,sign", [(3.0, -1), (0.5, 1), (2.0, 1)])
    def test_kappa_and_r3212(self, lam, sign):
        curv = geo.curvature(geo.preset("r4", lam=lam, sign=sign))
        assert curv.kappa_eigs == (-float(sign), -float(sign) * lam)
        # R^3_{212} in 1-based target indices
        assert curv.riemann_gamma[2, 1, 0, 1] == 1.0

    def test_sympy_oracle_on_gamma(self):
        lam, sign = sp.Rational(3), -1
        a = 1 + sign * (X2**2 + lam * X3**2) / 2
        b = X2**2
        rie, gam = sympy_riemann([[a**2, 0, b], [0, 1, 0], [b, 0, 1]], [X1, X2, X3], [0, 0, 0])
        assert np.array_equal(rie, geo._r4_riemann_gamma(3.0, -1))
        at = {X1: 0, X2: 0, X3: 0}
        dd = np.array([[[float(sp.diff(gam[i][0][0], v, w).subs(at)) for w in (X1, X2, X3)]
                        for v in (X1, X2, X3)] for i in range(3)])
        assert np.all(dd == 0.0)

    def test_generic_engine_on_gamma(self):
        man = geo.preset("r4", lam=3.0, sign=-1)
        rie = geo.metric_riemann(*man.metric((0.0, 0.0, 0.0)))
        assert np.allclose(rie, geo._r4_riemann_gamma(3.0, -1), atol=1e-14)

    def test_off_axis_against_sympy(self):
        lam = 2.0
        a = 1 + (X2**2 + lam * X3**2) / 2
        rie, _ = sympy_riemann([[a**2, 0, X2**2], [0, 1, 0], [X2**2, 0, 1]], [X1, X2, X3], [0.0, 0.2, -0.3])
        man = geo.preset("r4", lam=lam, sign=1)
        assert np.allclose(geo.metric_riemann(*man.metric((0.0, 0.2, -0.3))), rie, atol=1e-12)

    def test_coupling_f(self):
        spec = geo.GeodesicSpec((1.0, 0.2, 0.0))  # time-like
        c = geo.system_coefficients(geo.preset("r4", lam=3.0, sign=-1), spec)
        up = spec.raised
        assert c.c2.tolist() == pytest.approx([-spec.rho, -3.0 * spec.rho])
        assert np.allclose(c.F[1, :, 0, 0], 2.0 * up)
        assert np.allclose(c.F[0, :, 1, 0], -2.0 * up)
        assert np.all(c.E == 0.0)


class TestStability:
    def test_torus_needs_space_like(self):
        torus = geo.curvature(geo.preset("torus"))
        assert geo.classify_stability(geo.GeodesicSpec.from_rho(1.0), torus).stable
        assert not geo.classify_stability(geo.GeodesicSpec.from_rho(-1.0), torus).stable
        with pytest.raises(geo.GeometryError):
            geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec.from_rho(-1.0))

    def test_null_is_unstable(self):
        spec = geo.GeodesicSpec((1.0, 1.0, 0.0))
        assert spec.causal_type is geo.CausalType.NULL
        rep = geo.classify_stability(spec, geo.curvature(geo.preset("torus")))
        assert not rep.stable

    def test_r4_time_like_stable(self):
        curv = geo.curvature(geo.preset("r4", lam=3.0, sign=-1))
        rep = geo.classify_stability(geo.GeodesicSpec.from_rho(-1.0), curv)
        assert rep.stable and rep.time_like_stable and rep.c2 == (1.0, 3.0)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_rho_signature(self, a, b, c):
        spec = geo.GeodesicSpec((a, b, c))
        assert spec.rho == pytest.approx(-a * a + b * b + c * c)


class TestResonance:
    def test_resonance_set(self):
        assert geo.resonance_set_pair() == [0.25, 4.0]
        assert geo.check_nonresonance([1.0, 4.0])["resonant"]
        assert geo.check_nonresonance([1.0, 0.25])["resonant"]

    def test_stated_values_are_not_resonant(self):
        # lambda = 2 and 1/2 satisfy the definition
        assert not geo.check_nonresonance([1.0, 2.0])["resonant"]
        assert not geo.check_nonresonance([1.0, 0.5])["resonant"]

    @given(st.floats(0.01, 100.0).filter(lambda v: min(abs(v - 4), abs(v - 0.25), abs(v - 1)) > 1e-6))
    def test_generic_lambda_non_resonant(self, lam):
        assert not geo.check_nonresonance([1.0, lam])["resonant"]

    def test_zero_eigenvalue(self):
        with pytest.raises(geo.GeometryError):
            geo.check_nonresonance([0.0, 1.0])


def test_coefficients_json_round_trip():
    c = geo.system_coefficients(geo.preset("r4"), geo.GeodesicSpec.from_rho(-1.0))
    back = json.loads(json.dumps(c.to_json()))
    assert np.array_equal(np.asarray(back["F"]), c.F)
    assert back["n_kg"] == 2


def test_unknown_preset():
    with pytest.raises(geo.GeometryError):
        geo.preset("sphere")
