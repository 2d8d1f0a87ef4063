"""The ten acceptance gates, one test each.

Every test records a single PASS/FAIL line (printed in the terminal summary)
before asserting, so a failing gate still reports its measured numbers.
"""
import math
import time

import numpy as np
import sympy as sp

from conftest import ACCEPTANCE_LINES
from ehfol import energy as en
from ehfol import foliation as fo
from ehfol import geometry as geo
from ehfol import normalform as nf
from ehfol.analytic import T, X1, X2, AnalyticField, random_bumps
from ehfol.evolve import JET2, EvolutionConfig, energy_reports, run
from ehfol.fields import FieldState, Grid2D, polar_slice
from ehfol.system import GaussianProfile, InitialDataSpec, SystemInstance, Variant, generate_initial_data
from helpers import cone_points, jet_function, oscillating_fields


def gate(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_1_foliation_exactness():
    fo.time_function(2.0, 1.0)  # warm the cut-off tables outside the clock
    with Clock() as clk:
        e_hyp = abs(fo.time_function(2.0, 1.0)[0] - math.sqrt(5.0))
        plateau = fo.time_function(2.0, np.linspace(2.5, 200.0, 2000))[0]
        spread = float(np.ptp(plateau))
        t2 = fo.flat_time(2.0)
    ok = e_hyp <= 1e-12 and spread <= 1e-10 and 2.5 <= t2 <= math.sqrt(41.0) / 2 and clk.elapsed < 1.0
    gate(1, ok, f"|T(2,1)-sqrt5|={e_hyp:.1e}, plateau spread={spread:.1e}, T(2)={t2:.6f}, {clk.elapsed:.2f}s")


def test_criterion_2_weight_bounds():
    with Clock() as clk:
        lo = fo.weight_bound_constants(2.0, 5.0, n_s=200, n_r=200)
        hi = fo.weight_bound_constants(5.0, 10.0, n_s=200, n_r=200)
    zeta_ok = min(lo["zeta2_margin"], hi["zeta2_margin"]) >= -1e-12
    rel = {k: abs(lo[k] - hi[k]) / max(lo[k], hi[k]) for k in ("C_cone", "C_jac")}
    ok = zeta_ok and all(v <= 0.10 for v in rel.values()) and clk.elapsed < 5.0
    gate(2, ok, f"zeta2 margin={min(lo['zeta2_margin'], hi['zeta2_margin']):.1e}, "
                f"C_cone {lo['C_cone']:.4f} vs {hi['C_cone']:.4f} ({100 * rel['C_cone']:.1f}%), "
                f"C_jac {lo['C_jac']:.4f} vs {hi['C_jac']:.4f} ({100 * rel['C_jac']:.1f}%), {clk.elapsed:.2f}s")


def test_criterion_3_energy_identity():
    fld = AnalyticField(sp.exp(-((X1 - 0.3) ** 2 + (X2 + 0.2) ** 2)) * sp.cos(1.3 * T) * (1 + 0.2 * sp.sin(X1)), 0.0)
    ss = np.linspace(2.0, 3.0, 21)
    rel = []
    with Clock() as clk:
        for n in (64, 128, 256):
            grid = Grid2D.centered(n, 8.0)
            x1, x2 = grid.coords
            sys_ = SystemInstance(geo.SystemCoefficients.free(1, [1.0]), linear=True,
                                  forcing=lambda t, a, b: {"phi1": fld.evaluate("f", t, a, b)})
            z = np.zeros(grid.shape)
            st0 = FieldState(2.0, {"phi1": fld.evaluate("u", 2.0, x1, x2), "v2": z},
                             {"phi1": fld.evaluate("ut", 2.0, x1, x2), "v2": z.copy()})
            art = run(EvolutionConfig(grid, t_end=2.0), sys_, st0, probes=ss)
            res = en.energy_identity_residual([art.slices[s] for s in sorted(art.slices)], "phi1", 0.75, 0.0)
            rel.append(res["residual"] / res["E0"])
    orders = [math.log2(rel[k] / rel[k + 1]) for k in range(2)]
    ok = rel[-1] <= 1e-4 and min(orders) >= 2.0 and clk.elapsed < 120.0
    gate(3, ok, "residual/E(s0)=" + ", ".join(f"{v:.2e}" for v in rel)
         + ", orders=" + ", ".join(f"{v:.2f}" for v in orders) + f", {clk.elapsed:.1f}s")


def test_criterion_4_conformal_decomposition():
    gaps, worst_part = [], 0.0
    with Clock() as clk:
        rng = np.random.default_rng(2024)
        for _ in range(10):
            fld = random_bumps(rng, 2, 1.0, t0=3.0)
            ce = en.conformal_energy(polar_slice(3.0, {"u": fld.quantities()}, r_max=14.0))
            gaps.append(abs(ce["gap"]) / abs(ce["raw"]))
            worst_part = min(worst_part, *ce["parts"])
        radial = AnalyticField(sp.exp(-(X1**2 + X2**2) / 1.5 - (T - 3) ** 2 / 2))
        p2 = en.conformal_energy(polar_slice(3.0, {"u": radial.quantities()}, r_max=14.0))["parts"][1]
    ok = max(gaps) <= 1e-8 and worst_part >= -1e-10 and p2 <= 1e-10 and clk.elapsed < 30.0
    gate(4, ok, f"max rel gap={max(gaps):.1e}, min part={worst_part:.2e}, radial p2={p2:.1e}, {clk.elapsed:.1f}s")


def test_criterion_5_normal_form_identities():
    c = (1.0, 1.5, 2.7)
    with Clock() as clk:
        ctx = nf.NormalFormContext(c)
        jet_fn = jet_function(oscillating_fields(c))
        t, x1, x2 = cone_points(200, 2.2)
        rep = nf.verify_identities(ctx, jet_fn, t, x1, x2, hs=(0.02, 0.01, 0.005))
        try:
            nf.NormalFormContext((2.0, 1.0, 1.0))
            raised = False
        except nf.ResonanceError:
            raised = True
    orders = {k: min(v["orders"]) for k, v in rep.items()}
    ok = min(orders.values()) >= 1.9 and raised and clk.elapsed < 60.0
    gate(5, ok, ", ".join(f"{k} order {v:.3f}" for k, v in orders.items())
         + f", (2,1,1) resonance raised={raised}, {clk.elapsed:.1f}s")


def test_criterion_6_geometry_values():
    with Clock() as clk:
        torus = geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec.from_rho(1.0))
        k_torus = geo.curvature(geo.preset("torus")).kappa_matrix[0, 0]
        r4 = []
        for lam, sign in ((3.0, -1), (0.5, 1)):
            cv = geo.curvature(geo.preset("r4", lam=lam, sign=sign))
            r4.append(cv.kappa_eigs == (-float(sign), -float(sign) * lam) and cv.riemann_gamma[2, 1, 0, 1] == 1.0)
        res_set = geo.resonance_set_pair()
        stated_resonant = [geo.check_nonresonance([1.0, v])["resonant"] for v in (2.0, 0.5)]
    ok = (k_torus == -1.0 and np.all(torus.E == 0.0) and np.all(torus.F == 0.0) and all(r4)
          and res_set == [0.25, 4.0] and clk.elapsed < 1.0)
    gate(6, ok, f"torus kappa={k_torus}, E,F zero={np.all(torus.E == 0) and np.all(torus.F == 0)}, "
                f"R4 kappa and R^3_212 exact={all(r4)}, resonance set={res_set} "
                f"(stated 2 and 1/2 resonant: {stated_resonant}), {clk.elapsed:.2f}s")


def test_criterion_7_main_auxiliary_equivalence():
    coeffs = geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec((0.5, 1.2, 0.3)))
    spec = InitialDataSpec(0.01, {"phi1": GaussianProfile(1.0, 0.5, 2.0, (0.5, 0.0)),
                                  "v2": GaussianProfile(1.0, -0.3, 2.0, (-0.5, 0.3))})
    rel = []
    with Clock() as clk:
        for n in (64, 128, 256):
            grid = Grid2D.centered(n, 20.0)
            out = {}
            for variant in Variant:
                sys_ = SystemInstance(coeffs, variant, cubic_enabled=True)
                st0, _ = generate_initial_data(spec, sys_, grid)
                out[variant] = run(EvolutionConfig(grid, t_end=2.0), sys_, st0, probes=[5.0]).slices[5.0]
            a, b = out[Variant.MAIN].comps["phi1"]["u"], out[Variant.AUXILIARY].comps["phi1"]["u"]
            rel.append(float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
    ok = rel[-1] <= 1e-5 and rel[0] > rel[1] > rel[2] and clk.elapsed < 300.0
    gate(7, ok, "relative Linf at s=5 for n=64,128,256: " + ", ".join(f"{v:.2e}" for v in rel)
         + f", {clk.elapsed:.1f}s")


def test_criterion_8_linear_decay():
    ss = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]
    with Clock() as clk:
        grid = Grid2D.centered(426, 85.0)
        x1, x2 = grid.coords
        sys_ = SystemInstance(geo.SystemCoefficients.free(1, [1.0]), linear=True)
        z = np.zeros(grid.shape)
        st0 = FieldState(2.0, {"phi1": np.exp(-(x1**2 + x2**2) / 9.0), "v2": np.exp(-((x1 - 5.0) ** 2 + x2**2) / 9.0)},
                         {"phi1": z, "v2": z.copy()})
        art = run(EvolutionConfig(grid, t_end=2.0), sys_, st0, probes=ss, mask=grid.radius <= fo.rho_hyp(12.0))
    kg, wv = [], []
    for s in ss:
        sd = art.slices[s]
        h = sd.region_masks()["H"]
        v, w = sd.comps["v2"], sd.comps["phi1"]
        kg.append(float(np.max(sd.t[h] * np.abs(v["u"][h]))))
        dw = np.sqrt(w["ut"] ** 2 + w["u1"] ** 2 + w["u2"] ** 2)
        wv.append(float(np.max(np.sqrt(sd.t[h]) * dw[h])))
    kg_ratio, wv_ratio = max(kg) / min(kg), max(wv) / min(wv)
    ok = kg_ratio < 2.0 and wv_ratio < 2.0 and clk.elapsed < 300.0
    gate(8, ok, f"sup t|v| in [{min(kg):.3f}, {max(kg):.3f}] ratio {kg_ratio:.3f}; "
                f"sup t^(1/2)|dw| in [{min(wv):.3f}, {max(wv):.3f}] ratio {wv_ratio:.3f}, {clk.elapsed:.1f}s")


def test_criterion_9_small_data_growth():
    ss = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    coeffs = geo.system_coefficients(geo.preset("torus"), geo.GeodesicSpec.from_rho(1.0))
    spec = InitialDataSpec(1e-3, {"phi1": GaussianProfile(1.0, 0.5, 2.0, (0.5, 0.0)),
                                  "v2": GaussianProfile(1.0, -0.3, 2.0, (-0.5, 0.3))})
    with Clock() as clk:
        grid = Grid2D.centered(384, 64.0)
        sys_ = SystemInstance(coeffs, Variant.AUXILIARY, cubic_enabled=True)
        st0, _ = generate_initial_data(spec, sys_, grid)
        art = run(EvolutionConfig(grid, t_end=2.0), sys_, st0, probes=ss)
        E = dict.fromkeys(ss, 0.0)
        for comp in sys_.names:
            for rep in energy_reports(art.slices, comp, sys_.mass2[comp]):
                E[rep.s] += rep.E_total
    ratios = [E[s] / (2.0 * E[2.0] * (s / 2.0) ** 0.2) for s in ss]
    ok = max(ratios) <= 1.0 and clk.elapsed < 600.0
    gate(9, ok, f"E(2)={E[2.0]:.4e}, E(10)={E[10.0]:.4e}, max E(s)/(2E(2)(s/2)^0.2)={max(ratios):.3f} "
                f"(over s>2: {max(ratios[1:]):.3f}), {clk.elapsed:.1f}s")


def _sobolev_family_max(seed, s=3.0, n_fields=20):
    rh = fo.rho_hyp(s)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_fields):
        fld = random_bumps(rng, 1, 1.0, (1.0, 1.3), t0=4.0, phase=False)
        row = []
        for variant, r0, r1 in (("hyperbolic", 0.0, rh), ("exterior", rh, rh + 8.0)):
            sd = polar_slice(s, {"j": fld.quantities(JET2)}, r_max=r1, r_min=r0, n_theta=48, order=12)
            sd.comps["u"] = en.sobolev_keys_from_jet(sd, "j")
            row.append(en.sobolev_ratio(sd, variant))
        out.append(row)
    return np.asarray(out)


def test_criterion_10_sobolev_ratios():
    with Clock() as clk:
        a, b = _sobolev_family_max(11), _sobolev_family_max(12)
    finite = bool(np.all(np.isfinite(a)) and np.all(np.isfinite(b)))
    ma, mb = a.max(axis=0), b.max(axis=0)
    drift = np.abs(ma / mb - 1.0)
    ok = finite and np.all(drift <= 0.2) and clk.elapsed < 120.0
    gate(10, ok, f"hyperbolic max {ma[0]:.4f} vs {mb[0]:.4f}, exterior max {ma[1]:.4f} vs {mb[1]:.4f}, "
                 f"drift {100 * drift.max():.1f}%, {clk.elapsed:.1f}s")
