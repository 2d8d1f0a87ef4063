"""Cartesian grids, finite differences, vector fields and slice sampling.

Grids are cell centred, so a grid symmetric about the origin never has a
node at r = 0.  Arrays are indexed [i, j] with i along x^1 and j along x^2.
"""
from __future__ import annotations

import collections
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from . import foliation

__all__ = [
    "Grid2D",
    "FieldState",
    "History",
    "StaleHistoryError",
    "SliceData",
    "SliceProbe",
    "d1",
    "d2",
    "laplacian",
    "spatial_derivative",
    "lorentz_boost",
    "rotation",
    "frame_coefficients",
    "frame_derivative",
    "lagrange_weights",
    "slice_sample",
    "polar_slice",
    "grid_slice",
    "export_csv",
]


class StaleHistoryError(LookupError):
    """Requested slice time lies outside the stored history window."""


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dx: float
    origin: tuple[float, float]
    periodic: bool = False

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError("grid needs at least 16 points per axis")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @classmethod
    def centered(cls, n: int, half_width: float) -> "Grid2D":
        """n x n cells covering [-L, L]^2, nodes at cell centres."""
        dx = 2.0 * half_width / n
        o = -half_width + 0.5 * dx
        return cls(n, n, dx, (o, o))

    @classmethod
    def periodic_box(cls, n: int, length: float) -> "Grid2D":
        return cls(n, n, length / n, (0.0, 0.0), periodic=True)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.origin[0] + self.dx * np.arange(self.nx),
            self.origin[1] + self.dx * np.arange(self.ny),
        )

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.axes
        return np.meshgrid(a, b, indexing="ij")

    @property
    def radius(self) -> np.ndarray:
        x1, x2 = self.coords
        return np.hypot(x1, x2)

    @property
    def half_width(self) -> float:
        return 0.5 * self.nx * self.dx

    def interior_mask(self, fraction: float = 0.9) -> np.ndarray:
        """Points inside the sponge-free square of the given relative size."""
        x1, x2 = self.coords
        c1 = self.origin[0] + 0.5 * (self.nx - 1) * self.dx
        c2 = self.origin[1] + 0.5 * (self.ny - 1) * self.dx
        lim = fraction * self.half_width
        return (np.abs(x1 - c1) <= lim) & (np.abs(x2 - c2) <= lim)


@dataclass
class FieldState:
    """Snapshot at one time level: values u and time derivatives ut per component."""

    t: float
    u: dict[str, np.ndarray]
    ut: dict[str, np.ndarray]

    @property
    def names(self) -> list[str]:
        return list(self.u)

    def check_finite(self) -> None:
        for name in self.u:
            for label, arr in (("u", self.u[name]), ("ut", self.ut[name])):
                bad = ~np.isfinite(arr)
                if bad.any():
                    idx = tuple(int(v) for v in np.argwhere(bad)[0])
                    raise FloatingPointError(
                        f"non-finite {label} of {name} at t={self.t:.6g}, index {idx}"
                    )

    def copy(self) -> "FieldState":
        return FieldState(
            self.t,
            {k: v.copy() for k, v in self.u.items()},
            {k: v.copy() for k, v in self.ut.items()},
        )


# ---------------------------------------------------------------------------
# finite differences (fourth order)

_D1_LEFT = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0, 0.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0, 0.0]) / 12.0,
)
_D2_LEFT = (
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
)


def _move(f, axis):
    return np.moveaxis(f, axis, 0)


def d1(f: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    """First derivative along ``axis``; one-sided stencils at open ends."""
    if periodic:
        return (
            -np.roll(f, -2, axis) + 8.0 * np.roll(f, -1, axis)
            - 8.0 * np.roll(f, 1, axis) + np.roll(f, 2, axis)
        ) / (12.0 * h)
    g = _move(f, axis)
    out = np.empty_like(g)
    out[2:-2] = (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / (12.0 * h)
    head = g[:6]
    tail = g[-6:][::-1]
    for k, c in enumerate(_D1_LEFT):
        out[k] = np.tensordot(c, head, axes=(0, 0)) / h
        out[-1 - k] = -np.tensordot(c, tail, axes=(0, 0)) / h
    return np.moveaxis(out, 0, axis)


def d2(f: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    """Second derivative along ``axis``."""
    if periodic:
        return (
            -np.roll(f, -2, axis) + 16.0 * np.roll(f, -1, axis) - 30.0 * f
            + 16.0 * np.roll(f, 1, axis) - np.roll(f, 2, axis)
        ) / (12.0 * h * h)
    g = _move(f, axis)
    out = np.empty_like(g)
    out[2:-2] = (
        -g[4:] + 16.0 * g[3:-1] - 30.0 * g[2:-2] + 16.0 * g[1:-3] - g[:-4]
    ) / (12.0 * h * h)
    head = g[:6]
    tail = g[-6:][::-1]
    for k, c in enumerate(_D2_LEFT):
        out[k] = np.tensordot(c, head, axes=(0, 0)) / (h * h)
        out[-1 - k] = np.tensordot(c, tail, axes=(0, 0)) / (h * h)
    return np.moveaxis(out, 0, axis)


def laplacian(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    return d2(f, -2, grid.dx, grid.periodic) + d2(f, -1, grid.dx, grid.periodic)


def spatial_derivative(state: FieldState, component: str, axis: int, grid: Grid2D) -> np.ndarray:
    """d_a of a component; axis 1 or 2 means x^1 or x^2."""
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    return d1(state.u[component], axis - 1, grid.dx, grid.periodic)


def lorentz_boost(state: FieldState, component: str, a: int, grid: Grid2D) -> np.ndarray:
    """L_a u = x^a d_t u + t d_a u."""
    xa = grid.coords[a - 1]
    return xa * state.ut[component] + state.t * spatial_derivative(state, component, a, grid)


def rotation(state: FieldState, component: str, grid: Grid2D) -> np.ndarray:
    """Omega u = x^1 d_2 u - x^2 d_1 u."""
    x1, x2 = grid.coords
    return x1 * spatial_derivative(state, component, 2, grid) - x2 * spatial_derivative(
        state, component, 1, grid
    )


def frame_coefficients(frame: str, x1, x2, t, s: float | None = None):
    """Coefficients (k1, k2) of d_t in the frame vectors k_a d_t + d_a.

    frame is 'SHF' (x^a/t), 'SNF' (x^a/r, 0 at the origin) or 'TF'
    (xi x^a / sqrt(s^2 + r^2), needs s).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(x1, x2)
    if frame == "SHF":
        return x1 / t, x2 / t
    if frame == "SNF":
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, x1 / safe, 0.0), np.where(r > 0, x2 / safe, 0.0)
    if frame == "TF":
        if s is None:
            raise ValueError("TF frame needs the slice parameter s")
        k = foliation.xi(s, r) / np.sqrt(s * s + r * r)
        return k * x1, k * x2
    raise ValueError(f"unknown frame {frame!r}")


def frame_derivative(du_t, du_1, du_2, frame: str, index: int, x1, x2, t, s=None):
    """Frame derivative built from the Cartesian gradient (d_t u, d_1 u, d_2 u)."""
    k1, k2 = frame_coefficients(frame, x1, x2, t, s)
    if index == 1:
        return k1 * du_t + du_1
    if index == 2:
        return k2 * du_t + du_2
    raise ValueError("index must be 1 or 2")


# ---------------------------------------------------------------------------
# histories and slices


def lagrange_weights(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange basis weights, shape (len(nodes), len(x))."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.ones((len(nodes),) + x.shape)
    for i, ti in enumerate(nodes):
        for j, tj in enumerate(nodes):
            if i != j:
                w[i] *= (x - tj) / (ti - tj)
    return w


class History:
    """Ring buffer of (t, quantities) levels, newest last."""

    def __init__(self, depth: int = 8):
        if depth < 4:
            raise ValueError("cubic interpolation needs at least 4 levels")
        self.levels: collections.deque = collections.deque(maxlen=depth)

    def push(self, t: float, data: Mapping[str, np.ndarray]) -> None:
        self.levels.append((float(t), dict(data)))

    @property
    def times(self) -> np.ndarray:
        return np.array([lv[0] for lv in self.levels])

    def window(self) -> tuple[float, float]:
        ts = self.times
        return (float(ts[0]), float(ts[-1])) if len(ts) else (np.nan, np.nan)

    def interpolate(self, key: str, tstar: np.ndarray, select=None) -> np.ndarray:
        """Cubic interpolation of quantity ``key`` at per-point times tstar.

        ``select`` is a boolean mask or index array picking points of the
        flattened grid; tstar is given for the selected points.
        """
        ts = self.times
        if len(ts) < 4:
            raise StaleHistoryError("history holds fewer than 4 levels")
        lo, hi = ts[0], ts[-1]
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(tstar < lo - tol) or np.any(tstar > hi + tol):
            raise StaleHistoryError(
                f"slice needs t in [{float(np.min(tstar)):.6g}, {float(np.max(tstar)):.6g}] "
                f"but history covers [{lo:.6g}, {hi:.6g}]"
            )
        # stencil start: keep t* in the middle interval where possible
        k = np.searchsorted(ts, tstar, side="right") - 2
        k = np.clip(k, 0, len(ts) - 4)
        out = np.zeros(tstar.shape)
        for start in np.unique(k):
            pick = k == start
            nodes = ts[start:start + 4]
            w = lagrange_weights(nodes, tstar[pick])
            for m in range(4):
                arr = self.levels[start + m][1][key].ravel()
                vals = arr[select] if select is not None else arr
                out[pick] += w[m] * vals[pick]
        return out


@dataclass
class SliceData:
    """Values of fields on F_s at a set of points, with quadrature weights in dx.

    ``comps[name][q]`` holds quantity q ('u', 'ut', 'u1', 'u2', 'f', ...)
    of component ``name``.
    """

    s: float
    x1: np.ndarray
    x2: np.ndarray
    weights: np.ndarray
    comps: dict[str, dict[str, np.ndarray]]
    _geo: dict | None = field(default=None, repr=False)

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.x1, self.x2)

    @property
    def geo(self) -> dict:
        if self._geo is None:
            self._geo = foliation.slice_fields(self.s, self.r)
        return self._geo

    @property
    def t(self) -> np.ndarray:
        return self.geo["T"]

    def region_masks(self) -> dict[str, np.ndarray]:
        rh = foliation.rho_hyp(self.s)
        r = self.r
        return {"H": r <= rh, "T": (r > rh) & (r < rh + 1.0), "P": r >= rh + 1.0}


def slice_sample(history: History, s: float, expression: str, grid: Grid2D) -> np.ndarray:
    """Quantity ``expression`` at (T(s, |x|), x) for every grid point."""
    tstar, _ = foliation.time_function(s, grid.radius.ravel())
    return history.interpolate(expression, np.asarray(tstar)).reshape(grid.shape)


class SliceProbe:
    """Fills a slice incrementally while the evolution marches forward.

    After every new level, points whose T(s, |x|) has been passed by the
    second newest level are interpolated from the newest four levels.
    """

    def __init__(self, s: float, grid: Grid2D, keys: Iterable[str], mask: np.ndarray | None = None):
        self.s = float(s)
        self.grid = grid
        self.keys = list(keys)
        m = np.ones(grid.shape, dtype=bool) if mask is None else mask
        self.index = np.flatnonzero(m.ravel())
        r = grid.radius.ravel()[self.index]
        self.tstar = np.asarray(foliation.time_function(self.s, r)[0])
        self.t_max = float(self.tstar.max())
        self.t_min = float(self.tstar.min())
        self.values = {k: np.full(self.index.shape, np.nan) for k in self.keys}
        self.pending = np.ones(self.index.shape, dtype=bool)

    @property
    def done(self) -> bool:
        return not self.pending.any()

    def update(self, history: History, final: bool = False) -> None:
        ts = history.times
        if len(ts) < 4 or self.done:
            return
        limit = ts[-1] if final else ts[-2]
        sel = self.pending & (self.tstar <= limit + 1e-12 * max(1.0, limit))
        if not sel.any():
            return
        pts = np.flatnonzero(sel)
        idx = self.index[pts]
        for k in self.keys:
            self.values[k][pts] = history.interpolate(k, self.tstar[pts], select=idx)
        self.pending[pts] = False

    def to_slice(self, component_keys: Mapping[str, Mapping[str, str]]) -> SliceData:
        """Package as SliceData; component_keys maps name -> {q: history key}."""
        if not self.done:
            raise StaleHistoryError(f"slice s={self.s} incomplete: evolution stopped early")
        x1, x2 = self.grid.coords
        comps = {
            name: {q: self.values[key] for q, key in qs.items()}
            for name, qs in component_keys.items()
        }
        return SliceData(
            s=self.s,
            x1=x1.ravel()[self.index],
            x2=x2.ravel()[self.index],
            weights=np.full(self.index.shape, self.grid.dx**2),
            comps=comps,
        )


def grid_slice(s: float, grid: Grid2D, fields: Mapping[str, Callable], mask=None) -> SliceData:
    """SliceData on grid points from analytic fields.

    Each callable maps (t, x1, x2) to a dict of quantity arrays.
    """
    m = grid.interior_mask() if mask is None else mask
    x1, x2 = grid.coords
    x1, x2 = x1[m], x2[m]
    t, _ = foliation.time_function(s, np.hypot(x1, x2))
    comps = {name: dict(fn(np.asarray(t), x1, x2)) for name, fn in fields.items()}
    return SliceData(s, x1, x2, np.full(x1.shape, grid.dx**2), comps)


def _radial_panels(s: float, r_max: float, panel: float) -> np.ndarray:
    rh = foliation.rho_hyp(s)
    edges = [0.0]
    for a, b, w in ((0.0, min(rh, r_max), panel), (rh, min(rh + 1.0, r_max), 0.125)):
        if b > a:
            n = max(1, int(np.ceil((b - a) / w)))
            edges.extend(np.linspace(a, b, n + 1)[1:])
    if r_max > rh + 1.0:
        n = max(1, int(np.ceil((r_max - rh - 1.0) / panel)))
        edges.extend(np.linspace(rh + 1.0, r_max, n + 1)[1:])
    return np.unique(np.array(edges))


def polar_slice(
    s: float,
    fields: Mapping[str, Callable],
    r_max: float,
    n_theta: int = 64,
    order: int = 16,
    panel: float = 0.5,
    r_min: float = 0.0,
) -> SliceData:
    """SliceData on a polar Gauss-Legendre x trapezoid rule.

    Radial panels break at rho_H and rho_H + 1, where the slice changes
    character; weights include the Jacobian r.
    """
    edges = _radial_panels(s, r_max, panel)
    edges = edges[edges >= r_min]
    if r_min > 0 and (len(edges) == 0 or edges[0] > r_min):
        edges = np.concatenate([[r_min], edges])
    g, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    rr = (0.5 * (a + b)[:, None] + half[:, None] * g[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel() * rr
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    R, TH = np.meshgrid(rr, th, indexing="ij")
    W = np.repeat(wr, n_theta) * (2.0 * np.pi / n_theta)
    x1 = (R * np.cos(TH)).ravel()
    x2 = (R * np.sin(TH)).ravel()
    t, _ = foliation.time_function(s, np.hypot(x1, x2))
    comps = {name: dict(fn(np.asarray(t), x1, x2)) for name, fn in fields.items()}
    return SliceData(s, x1, x2, W, comps)


def export_csv(path, state: FieldState, grid: Grid2D) -> None:
    """Write x1,x2,component,value rows (values only, not time derivatives)."""
    x1, x2 = grid.coords
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x1,x2,component,value\n")
        for name, arr in state.u.items():
            for a, b, v in zip(x1.ravel(), x2.ravel(), arr.ravel()):
                fh.write(f"{a:.17g},{b:.17g},{name},{v:.17g}\n")
