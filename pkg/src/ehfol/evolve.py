"""Method-of-lines integration with RK4, a sponge layer and slice probes.

Each component solves u_tt = Laplacian u - c^2 u + rhs - sigma u_t, where
sigma is a smooth sponge supported in the outer band of the box.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import energy as en
from .fields import (
    FieldState,
    Grid2D,
    History,
    SliceData,
    SliceProbe,
    d1,
    d2,
    laplacian,
)
from .system import SystemInstance, Variant, reconstruct_phi1, rhs

__all__ = [
    "EvolutionConfig",
    "RunArtifacts",
    "sponge_profile",
    "step_rk4",
    "run",
    "level_quantities",
    "energy_reports",
    "plane_wave_error",
    "convergence_study",
    "observed_orders",
]

JET1 = ("u", "ut", "u1", "u2", "f")
JET2 = JET1 + ("utt", "ut1", "ut2", "u11", "u12", "u22")


@dataclass
class EvolutionConfig:
    grid: Grid2D
    t_end: float
    cfl: float = 0.25
    t0: float = 2.0
    snapshot_stride: int = 0
    sponge_fraction: float = 0.1
    sponge_strength: float = 3.0
    jet: int = 1
    history_depth: int = 6

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if not 0.0 <= self.sponge_fraction < 0.5:
            raise ValueError("sponge_fraction must lie in [0, 0.5)")
        if self.jet not in (1, 2):
            raise ValueError("jet must be 1 or 2")
        if self.t_end < self.t0:
            raise ValueError("t_end precedes t0")

    @property
    def dt(self) -> float:
        return self.cfl * self.grid.dx

    def interior_mask(self) -> np.ndarray:
        if self.grid.periodic:
            return np.ones(self.grid.shape, dtype=bool)
        return self.grid.interior_mask(1.0 - self.sponge_fraction)


@dataclass
class RunArtifacts:
    state: FieldState
    slices: dict[float, SliceData]
    snapshots: list[FieldState]
    dt: float
    steps: int
    wall_time: float
    meta: dict = field(default_factory=dict)


def sponge_profile(grid: Grid2D, fraction: float, strength: float) -> np.ndarray:
    """sigma rising as a half cosine from 0 to ``strength`` across the outer band."""
    if grid.periodic or fraction == 0.0 or strength == 0.0:
        return np.zeros(grid.shape)
    x1, x2 = grid.coords
    c1 = grid.origin[0] + 0.5 * (grid.nx - 1) * grid.dx
    c2 = grid.origin[1] + 0.5 * (grid.ny - 1) * grid.dx
    d = np.maximum(np.abs(x1 - c1), np.abs(x2 - c2))
    inner = (1.0 - fraction) * grid.half_width
    z = np.clip((d - inner) / (fraction * grid.half_width), 0.0, 1.0)
    return strength * 0.5 * (1.0 - np.cos(np.pi * z))


def _accelerations(state: FieldState, sys_: SystemInstance, grid: Grid2D, sigma, mass2):
    src = rhs(state, sys_, grid)
    acc = {}
    for name in state.u:
        a = laplacian(state.u[name], grid) - mass2[name] * state.u[name] + src[name]
        if sigma is not None:
            a = a - sigma * state.ut[name]
        acc[name] = a
    return acc, src


def step_rk4(state: FieldState, sys_: SystemInstance, dt: float, grid: Grid2D,
             sigma: np.ndarray | None = None) -> FieldState:
    """One classical RK4 step of (u, u_t)."""
    mass2 = sys_.mass2
    names = list(state.u)

    def stage(base: FieldState, ku, kv, h):
        return FieldState(
            base.t + h,
            {n: base.u[n] + h * ku[n] for n in names},
            {n: base.ut[n] + h * kv[n] for n in names},
        )

    k1u = state.ut
    k1v, _ = _accelerations(state, sys_, grid, sigma, mass2)
    s2 = stage(state, k1u, k1v, 0.5 * dt)
    k2u = s2.ut
    k2v, _ = _accelerations(s2, sys_, grid, sigma, mass2)
    s3 = stage(state, k2u, k2v, 0.5 * dt)
    k3u = s3.ut
    k3v, _ = _accelerations(s3, sys_, grid, sigma, mass2)
    s4 = stage(state, k3u, k3v, dt)
    k4u = s4.ut
    k4v, _ = _accelerations(s4, sys_, grid, sigma, mass2)
    out = FieldState(
        state.t + dt,
        {n: state.u[n] + dt / 6.0 * (k1u[n] + 2 * k2u[n] + 2 * k3u[n] + k4u[n]) for n in names},
        {n: state.ut[n] + dt / 6.0 * (k1v[n] + 2 * k2v[n] + 2 * k3v[n] + k4v[n]) for n in names},
    )
    _check(out)
    return out


def _check(state: FieldState) -> None:
    try:
        state.check_finite()
    except FloatingPointError:
        raise
    big = max(float(np.max(np.abs(a))) for a in state.u.values())
    if big > 1e12:
        name, arr = max(state.u.items(), key=lambda kv: float(np.max(np.abs(kv[1]))))
        idx = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(arr)), arr.shape))
        raise FloatingPointError(f"blow-up of {name} at t={state.t:.6g}, index {idx}, |u|={big:.3g}")


def level_quantities(state: FieldState, sys_: SystemInstance, grid: Grid2D, jet: int = 1,
                     names: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Values stored per time level for slice probes, keyed 'name:q'.

    'f' is (box + c^2) of the component; 'utt' uses the undamped equation.
    Auxiliary runs also expose the reconstructed 'phi1:u'.
    """
    src = rhs(state, sys_, grid)
    mass2 = sys_.mass2
    h, per = grid.dx, grid.periodic
    out = {}
    for n in names or state.u:
        u, ut = state.u[n], state.ut[n]
        u1, u2 = d1(u, 0, h, per), d1(u, 1, h, per)
        out[f"{n}:u"], out[f"{n}:ut"] = u, ut
        out[f"{n}:u1"], out[f"{n}:u2"] = u1, u2
        out[f"{n}:f"] = src[n]
        if jet >= 2:
            out[f"{n}:utt"] = laplacian(u, grid) - mass2[n] * u + src[n]
            out[f"{n}:ut1"], out[f"{n}:ut2"] = d1(ut, 0, h, per), d1(ut, 1, h, per)
            out[f"{n}:u11"], out[f"{n}:u22"] = d2(u, 0, h, per), d2(u, 1, h, per)
            out[f"{n}:u12"] = d1(u1, 1, h, per)
    if sys_.variant is Variant.AUXILIARY:
        out["phi1:u"] = reconstruct_phi1(state, sys_, grid)
    return out


def run(config: EvolutionConfig, sys_: SystemInstance, state0: FieldState,
        probes: Sequence[float] = (), mask: np.ndarray | None = None,
        callback: Callable[[FieldState], None] | None = None) -> RunArtifacts:
    """Evolve until t_end and every probed slice is complete.

    ``probes`` lists slice parameters s.  The last step is shortened so the
    run lands on t_end exactly when no probe needs a later time.
    """
    grid = config.grid
    dt = config.dt
    cmax = math.sqrt(max([0.0] + [c for c in sys_.mass2.values()]))
    if dt * cmax >= 1.0:
        raise ValueError(f"stability gate violated: dt*max(c) = {dt * cmax:.3g} >= 1")
    if abs(state0.t - config.t0) > 1e-12:
        raise ValueError("initial state time does not match config.t0")
    sigma = sponge_profile(grid, config.sponge_fraction, config.sponge_strength)
    sigma = sigma if np.any(sigma) else None
    mask = config.interior_mask() if mask is None else mask
    jet_keys = JET2 if config.jet == 2 else JET1
    keys = [f"{n}:{q}" for n in state0.u for q in jet_keys]
    if sys_.variant is Variant.AUXILIARY:
        keys.append("phi1:u")
    plist = [SliceProbe(s, grid, keys, mask) for s in sorted(set(float(s) for s in probes))]
    for p in plist:
        if p.t_min < config.t0 - 1e-12:
            raise ValueError(f"slice s={p.s} reaches below t0")
    t_stop = max([config.t_end] + [p.t_max + 2.5 * dt for p in plist])

    history = History(config.history_depth)
    state = state0.copy()
    snapshots = []
    wall = time.perf_counter()
    steps = 0
    if plist:
        history.push(state.t, level_quantities(state, sys_, grid, config.jet))
    while state.t < t_stop - 1e-12 * max(1.0, t_stop):
        h = min(dt, t_stop - state.t)
        state = step_rk4(state, sys_, h, grid, sigma)
        steps += 1
        if callback is not None:
            callback(state)
        if config.snapshot_stride and steps % config.snapshot_stride == 0:
            snapshots.append(state.copy())
        if any(not p.done for p in plist):
            history.push(state.t, level_quantities(state, sys_, grid, config.jet))
            for p in plist:
                p.update(history)
    for p in plist:
        p.update(history, final=True)
    comp_keys = {n: {q: f"{n}:{q}" for q in jet_keys} for n in state0.u}
    if sys_.variant is Variant.AUXILIARY:
        comp_keys["phi1"] = {"u": "phi1:u"}
    slices = {p.s: p.to_slice(comp_keys) for p in plist}
    if not snapshots or snapshots[-1].t != state.t:
        snapshots.append(state.copy())
    return RunArtifacts(
        state=state,
        slices=slices,
        snapshots=snapshots,
        dt=dt,
        steps=steps,
        wall_time=time.perf_counter() - wall,
        meta={"dt": dt, "steps": steps, "t_final": state.t, "t_stop": t_stop},
    )


def energy_reports(slices: dict[float, SliceData], comp: str, c2: float, eta: float = 0.75,
                   diagnostics: Sequence[str] = ()) -> list[en.EnergyReport]:
    """One EnergyReport per slice, ghost column accumulated in s.

    diagnostics may include 'conformal', 'sobolev' and 'kg_decay'; the
    Sobolev columns need a run with jet=2.
    """
    ss = sorted(slices)
    reports = []
    ghost_vals = []
    for s in ss:
        sd = slices[s]
        ev = en.energy(sd, comp, eta, c2)
        ghost_vals.append(float(np.sum(en.ghost_density(sd, comp, eta, c2) * sd.weights)))
        rep = en.EnergyReport(s=s, E_total=ev.total, E_H=ev.H, E_T=ev.T, E_P=ev.P,
                              ghost=en.integrate_in_s(ss[: len(ghost_vals)], ghost_vals)
                              if len(ghost_vals) > 1 else 0.0)
        if "conformal" in diagnostics:
            ce = en.conformal_energy(sd, comp)
            rep.Econ_raw = ce["raw"]
            rep.Econ_p1, rep.Econ_p2, rep.Econ_p3 = ce["parts"]
        if "sobolev" in diagnostics:
            rep.sob_hyp = en.sobolev_ratio(sd, "hyperbolic", eta, comp)
            rep.sob_ext = en.sobolev_ratio(sd, "exterior", eta, comp)
        if "kg_decay" in diagnostics and c2 > 0:
            rep.kg_decay = en.kg_extra_decay_ratio(sd, comp, eta, c2)
        reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# convergence harness on a periodic box


def plane_wave_error(n: int, mass2: float = 0.0, k=(1, 2), t_end: float = 1.0,
                     cfl: float = 0.25, length: float = 2.0 * math.pi) -> float:
    """L-infinity error of sin(k.x - omega t), omega^2 = |k|^2 + c^2, after t_end."""
    from .geometry import SystemCoefficients

    grid = Grid2D.periodic_box(n, length)
    kk = np.asarray(k, dtype=float) * 2.0 * math.pi / length
    omega = math.sqrt(float(kk @ kk) + mass2)
    name = "v2" if mass2 > 0 else "phi1"
    coeffs = SystemCoefficients.free(n_kg=1, c2=[mass2 if mass2 > 0 else 1.0])
    sys_ = SystemInstance(coeffs, linear=True)
    x1, x2 = grid.coords
    phase = kk[0] * x1 + kk[1] * x2
    u = {"phi1": np.zeros(grid.shape), "v2": np.zeros(grid.shape)}
    ut = {"phi1": np.zeros(grid.shape), "v2": np.zeros(grid.shape)}
    u[name] = np.sin(phase)
    ut[name] = -omega * np.cos(phase)
    cfg = EvolutionConfig(grid=grid, t_end=t_end, cfl=cfl, t0=0.0)
    art = run(cfg, sys_, FieldState(0.0, u, ut))
    exact = np.sin(phase - omega * art.state.t)
    return float(np.max(np.abs(art.state.u[name] - exact)))


def observed_orders(errors: Sequence[float]) -> list[float]:
    """log2 of successive error ratios for grids h, h/2, h/4, ..."""
    e = np.asarray(errors, dtype=float)
    return [float(v) for v in np.log2(e[:-1] / e[1:])]


def convergence_study(kind: str = "kg", levels: int = 3, n0: int = 16, **kw) -> dict:
    """Plane-wave errors on n0 * 2^l grids and the observed orders."""
    if levels < 2:
        raise ValueError("need at least two levels")
    mass2 = {"kg": 1.0, "wave": 0.0}[kind]
    ns = [n0 * 2**l for l in range(levels)]
    errs = [plane_wave_error(n, mass2=mass2, **kw) for n in ns]
    return {"kind": kind, "n": ns, "errors": errs, "orders": observed_orders(errs)}
