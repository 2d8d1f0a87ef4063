import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehfol import geometry as geo
from ehfol import system as sy
from ehfol.fields import FieldState, Grid2D
from ehfol.system import GaussianProfile, InitialDataSpec, SystemInstance, Variant


def torus_coeffs(d=(0.5, 1.2, 0.3)):
    return geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec(d))


def r4_coeffs():
    return geo.system_coefficients(geo.preset("r4", lam=3.0, sign=-1), geo.GeodesicSpec((1.0, 0.2, 0.1)))


def bump_state(sys_, grid, t=2.0, seed=0):
    rng = np.random.default_rng(seed)
    x1, x2 = grid.coords
    u, ut = {}, {}
    for name in sys_.names:
        c = rng.uniform(-1, 1, 2)
        g = np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / 2.0)
        u[name] = rng.uniform(0.2, 1.0) * g
        ut[name] = rng.uniform(-1, 1) * g
    return FieldState(t, u, ut)


class TestNames:
    def test_main_and_auxiliary_names(self):
        c = r4_coeffs()
        assert SystemInstance(c).names == ["phi1", "v2", "v3"]
        aux = SystemInstance(c, Variant.AUXILIARY)
        assert aux.names == ["w0", "w2", "w3", "v2", "v3"]
        assert aux.mass2["w2"] == 0.0 and aux.mass2["v3"] == pytest.approx(3.0 * 0.95)


class TestRightHandSides:
    @pytest.mark.parametrize("variant", list(Variant))
    @pytest.mark.parametrize("cubic", [False, True])
    def test_zero_state_gives_zero(self, variant, cubic):
        grid = Grid2D.centered(16, 3.0)
        sys_ = SystemInstance(torus_coeffs(), variant, cubic_enabled=cubic)
        z = {n: np.zeros(grid.shape) for n in sys_.names}
        out = sy.rhs(FieldState(2.0, z, dict(z)), sys_, grid)
        assert all(np.all(v == 0.0) for v in out.values())

    def test_torus_main_against_exact_derivatives(self):
        # phi1 = a x1 + b x2 + e t and v2 = polynomial of degree 2: the FD gradients are exact
        c = torus_coeffs()
        sys_ = SystemInstance(c)
        grid = Grid2D.centered(20, 2.0)
        x1, x2 = grid.coords
        phi = 0.3 * x1 - 0.7 * x2
        v = 1.0 + 0.2 * x1**2 - 0.1 * x1 * x2
        dphi = (0.4, 0.3, -0.7)
        dv = (0.5 * v, 0.4 * x1 - 0.1 * x2, -0.1 * x1)
        out = sy.main_rhs(FieldState(2.0, {"phi1": phi, "v2": v}, {"phi1": np.full(grid.shape, 0.4), "v2": dv[0]}),
                          sys_, grid)
        want_w = sum(2.0 * c.A[al, 0] * v * dv[al] for al in range(3))
        want_v = sum(c.K[0, al] * v * dphi[al] for al in range(3))
        assert np.allclose(out["phi1"], want_w, atol=1e-11)
        assert np.allclose(out["v2"], want_v, atol=1e-11)

    def test_r4_couplings_match_tensor_contraction(self):
        c = r4_coeffs()
        sys_ = SystemInstance(c)
        grid = Grid2D.centered(16, 2.0)
        x1, x2 = grid.coords
        v = [1.0 + 0.1 * x1, 0.5 - 0.2 * x2]
        vt = [0.3 * x2, -0.4 + 0.0 * x1]
        dv = [(vt[0], np.full(grid.shape, 0.1), np.zeros(grid.shape)),
              (vt[1], np.zeros(grid.shape), np.full(grid.shape, -0.2))]
        phi = 0.1 * x1 * x2
        dphi = (np.full(grid.shape, 0.25), 0.1 * x2, 0.1 * x1)
        st_ = FieldState(2.0, {"phi1": phi, "v2": v[0], "v3": v[1]},
                         {"phi1": dphi[0], "v2": vt[0], "v3": vt[1]})
        out = sy.main_rhs(st_, sys_, grid)
        for i, name in enumerate(("v2", "v3")):
            want = sum(c.K[i, a] * v[i] * dphi[a] for a in range(3))
            want = want + sum(c.E[i, j, k] * v[j] * v[k] for j in range(2) for k in range(2))
            want = want + sum(c.F[i, a, j, k] * v[j] * dv[k][a] for a in range(3) for j in range(2) for k in range(2))
            assert np.allclose(out[name], want, atol=1e-12)

    def test_auxiliary_w_sources_are_squares(self):
        sys_ = SystemInstance(r4_coeffs(), Variant.AUXILIARY)
        grid = Grid2D.centered(16, 3.0)
        st_ = bump_state(sys_, grid)
        out = sy.auxiliary_rhs(st_, sys_, grid)
        assert np.array_equal(out["w2"], st_.u["v2"] ** 2)
        assert np.array_equal(out["w3"], st_.u["v3"] ** 2)
        assert np.all(out["w0"] == 0.0)

    def test_translation_equivariance(self):
        sys_ = SystemInstance(torus_coeffs(), cubic_enabled=True)
        grid = Grid2D.periodic_box(32, 12.0)
        st_ = bump_state(sys_, grid)
        shift = lambda f: np.roll(f, (3, -5), axis=(0, 1))
        moved = FieldState(2.0, {k: shift(v) for k, v in st_.u.items()}, {k: shift(v) for k, v in st_.ut.items()})
        a, b = sy.rhs(st_, sys_, grid), sy.rhs(moved, sys_, grid)
        for k in a:
            assert np.allclose(shift(a[k]), b[k], atol=1e-13)

    def test_forcing_and_linear_flag(self):
        grid = Grid2D.centered(16, 2.0)
        sys_ = SystemInstance(torus_coeffs(), linear=True, forcing=lambda t, x1, x2: {"v2": t + x1})
        out = sy.rhs(bump_state(sys_, grid, t=2.5), sys_, grid)
        assert np.all(out["phi1"] == 0.0)
        assert np.allclose(out["v2"], 2.5 + grid.coords[0])

    def test_nonfinite_is_located(self):
        grid = Grid2D.centered(16, 2.0)
        sys_ = SystemInstance(torus_coeffs())
        st_ = bump_state(sys_, grid)
        st_.u["v2"][4, 7] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError, match="v2|phi1"):
            sy.rhs(st_, sys_, grid)

    def test_free_auxiliary_is_w0(self):
        sys_ = SystemInstance(geo.SystemCoefficients.free(1, [1.0]), Variant.AUXILIARY)
        grid = Grid2D.centered(16, 2.0)
        st_ = bump_state(sys_, grid)
        assert np.array_equal(sy.reconstruct_phi1(st_, sys_, grid), st_.u["w0"])


class TestAuxiliaryMap:
    @pytest.mark.parametrize("cubic", [False, True])
    def test_reconstruction_at_initial_time(self, cubic):
        c = torus_coeffs()
        main = SystemInstance(c, cubic_enabled=cubic)
        aux = SystemInstance(c, Variant.AUXILIARY, cubic_enabled=cubic)
        grid = Grid2D.centered(24, 4.0)
        st_ = bump_state(main, grid, seed=3)
        ast = sy.auxiliary_data(st_, aux)
        u, du = sy._reconstruct(ast, aux, grid)
        assert np.allclose(u, st_.u["phi1"], atol=1e-15)
        assert np.allclose(du[0], st_.ut["phi1"], atol=1e-14)
        # same KG right-hand side, since u and its gradient coincide with phi1
        a, b = sy.rhs(st_, main, grid), sy.rhs(ast, aux, grid)
        assert np.allclose(a["v2"], b["v2"], atol=1e-13)
        assert np.allclose(sy.reconstruct_phi1(ast, aux, grid), st_.u["phi1"])


class TestInitialData:
    def _spec(self, eps):
        return InitialDataSpec(eps, {"phi1": GaussianProfile(1.0, 0.5, 2.0), "v2": GaussianProfile(1.0, -0.3, 1.5, (1, 0))})

    def test_zero_epsilon_zero_norms(self):
        sys_ = SystemInstance(torus_coeffs())
        _, norms = sy.generate_initial_data(self._spec(0.0), sys_, Grid2D.centered(32, 8.0))
        assert all(v == 0.0 for per in norms.values() for v in per.values())

    @given(st.floats(1e-4, 1.0))
    @settings(max_examples=10, deadline=None)
    def test_norms_linear_in_epsilon(self, eps):
        sys_ = SystemInstance(torus_coeffs())
        grid = Grid2D.centered(32, 8.0)
        _, n1 = sy.generate_initial_data(self._spec(1.0), sys_, grid)
        _, ne = sy.generate_initial_data(self._spec(eps), sys_, grid)
        for name in n1:
            for k in n1[name]:
                assert ne[name][k] == pytest.approx(eps * n1[name][k], rel=1e-12)

    def test_norms_resolved(self):
        sys_ = SystemInstance(torus_coeffs())
        a = sy.generate_initial_data(self._spec(1.0), sys_, Grid2D.centered(64, 12.0))[1]
        b = sy.generate_initial_data(self._spec(1.0), sys_, Grid2D.centered(128, 12.0))[1]
        for name in a:
            for k in a[name]:
                assert a[name][k] == pytest.approx(b[name][k], rel=1e-2)

    def test_auxiliary_instance_gets_mapped_data(self):
        sys_ = SystemInstance(torus_coeffs(), Variant.AUXILIARY)
        state, _ = sy.generate_initial_data(self._spec(0.1), sys_, Grid2D.centered(16, 4.0))
        assert set(state.u) == {"w0", "w2", "v2"}
        assert np.all(state.u["w2"] == 0.0)

    @pytest.mark.parametrize("kw", [dict(epsilon=-1.0), dict(epsilon=0.1, eta=0.4), dict(epsilon=0.1, N=3)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            InitialDataSpec(profiles={}, **kw)
