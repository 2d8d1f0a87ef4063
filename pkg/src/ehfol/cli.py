"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path


def _cap_threads() -> None:
    """Honour EHFOL_THREADS for BLAS/OpenMP pools (effective before numpy loads)."""
    val = os.environ.get("EHFOL_THREADS")
    if val is None:
        return
    if not val.isdigit() or int(val) < 1:
        raise ValueError(f"EHFOL_THREADS must be a positive integer, got {val!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = val


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_PROFILE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "amp0": _NUM,
        "amp1": _NUM,
        "width": {"type": "number", "exclusiveMinimum": 0},
        "center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["preset", "grid", "evolution"],
    "properties": {
        "preset": {"enum": ["torus", "revolution", "r4"]},
        "seed": {"type": "integer", "minimum": 0},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": _NUM,
                "dphiS": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "lam": {"type": "number", "exclusiveMinimum": 0},
                "sign": {"enum": [-1, 1]},
                "epsilon": {"type": "number", "minimum": 0},
                "eta": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1.0},
                "cubic_enabled": {"type": "boolean"},
                "variant": {"enum": ["main", "auxiliary"]},
                "linear": {"type": "boolean"},
                "profiles": {"type": "object", "additionalProperties": _PROFILE},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "half_width"],
            "properties": {
                "n": {"type": "integer", "minimum": 16},
                "half_width": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "evolution": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_end"],
            "properties": {
                "t_end": {"type": "number", "minimum": 2},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "snapshot_stride": {"type": "integer", "minimum": 0},
                "sponge_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                "sponge_strength": {"type": "number", "minimum": 0},
            },
        },
        "probes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "s": {"type": "array", "items": {"type": "number", "minimum": 1}},
                "diagnostics": {
                    "type": "array",
                    "items": {"enum": ["conformal", "sobolev", "kg_decay"]},
                    "uniqueItems": True,
                },
            },
        },
        "output": {"type": "string"},
    },
}


def validate_config(cfg) -> None:
    """Raise ConfigError naming the schema path of the first violation."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        schema_path = "/".join(str(p) for p in err.schema_path)
        raise ConfigError(f"config error at {where} (schema {schema_path}): {err.message}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommands


def cmd_foliation_table(args) -> int:
    import numpy as np

    from . import foliation

    writer = csv.writer(sys.stdout, lineterminator="\n")
    cols = ["s", "r", "region", "T", "dT_dr", "J", "xi", "zeta", "omega"]
    writer.writerow(cols)
    r = np.linspace(0.0, args.r_max, args.n)
    for s in args.s:
        f = foliation.slice_fields(s, r)
        regions = foliation.region_of(s, r)
        for k in range(len(r)):
            writer.writerow([_fmt(s), _fmt(r[k]), regions[k].value] + [
                _fmt(f[c][k]) for c in cols[3:]
            ])
    return 0


def _coefficients(preset_name, rho=None, dphiS=None, lam=3.0, sign=-1, require_stable=True):
    from . import geometry as geo

    man = geo.preset(preset_name, lam=lam, sign=sign)
    if dphiS is not None:
        spec = geo.GeodesicSpec(tuple(float(v) for v in dphiS))
    else:
        spec = geo.GeodesicSpec.from_rho(1.0 if rho is None else float(rho))
    return man, spec, geo.system_coefficients(man, spec, require_stable=require_stable)


def cmd_geometry_report(args) -> int:
    import numpy as np

    from . import geometry as geo

    man = geo.preset(args.preset, lam=args.lam, sign=args.sign)
    spec = (geo.GeodesicSpec(tuple(args.dphiS)) if args.dphiS is not None
            else geo.GeodesicSpec.from_rho(args.rho))
    curv = geo.curvature(man)
    rep = geo.classify_stability(spec, curv)
    coeffs = geo.system_coefficients(man, spec, require_stable=False)
    out = {
        "preset": args.preset,
        "rho": spec.rho,
        "causal_type": spec.causal_type.value,
        "kappa": [float(v) for v in curv.kappa_eigs],
        "c2": coeffs.c2.tolist(),
        "stable": bool(rep.stable),
        "E_zero": bool(np.all(coeffs.E == 0)),
        "F_zero": bool(np.all(coeffs.F == 0)),
        "coefficients": coeffs.to_json(),
    }
    if rep.stable:
        out["nonresonance"] = geo.check_nonresonance(coeffs.c2)
    json.dump(out, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")
    return 0


def _json_default(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def build_run(cfg: dict):
    """Config dict -> (EvolutionConfig, SystemInstance, initial state, norms, probes)."""
    import numpy as np

    from .evolve import EvolutionConfig
    from .fields import Grid2D
    from .system import GaussianProfile, InitialDataSpec, SystemInstance, Variant, generate_initial_data

    sysc = cfg.get("system", {})
    _, _, coeffs = _coefficients(
        cfg["preset"], rho=sysc.get("rho"), dphiS=sysc.get("dphiS"),
        lam=sysc.get("lam", 3.0), sign=sysc.get("sign", -1),
    )
    variant = Variant(sysc.get("variant", "main"))
    si = SystemInstance(coeffs, variant, cubic_enabled=sysc.get("cubic_enabled", False),
                        linear=sysc.get("linear", False))
    grid = Grid2D.centered(cfg["grid"]["n"], cfg["grid"]["half_width"])
    ev = cfg["evolution"]
    econf = EvolutionConfig(
        grid=grid,
        t_end=ev["t_end"],
        cfl=ev.get("cfl", 0.25),
        snapshot_stride=ev.get("snapshot_stride", 0),
        sponge_fraction=ev.get("sponge_fraction", 0.1),
        sponge_strength=ev.get("sponge_strength", 3.0),
    )
    names = ["phi1"] + si.kg_names
    rng = np.random.default_rng(cfg.get("seed", 0))
    profiles = {}
    given = sysc.get("profiles", {})
    unknown = set(given) - set(names)
    if unknown:
        raise ConfigError(f"config error at system/profiles: unknown components {sorted(unknown)}")
    for name in names:
        if name in given:
            p = given[name]
            profiles[name] = GaussianProfile(p.get("amp0", 1.0), p.get("amp1", 0.0),
                                             p.get("width", 1.0), tuple(p.get("center", (0.0, 0.0))))
        else:
            profiles[name] = GaussianProfile(float(rng.uniform(0.5, 1.0)), float(rng.uniform(-0.5, 0.5)),
                                             float(rng.uniform(1.0, 2.0)),
                                             tuple(float(v) for v in rng.uniform(-0.5, 0.5, 2)))
    spec = InitialDataSpec(sysc.get("epsilon", 1e-3), profiles, eta=sysc.get("eta", 0.75))
    state, norms = generate_initial_data(spec, si, grid)
    probes = cfg.get("probes", {})
    return econf, si, state, norms, probes.get("s", []), probes.get("diagnostics", [])


SLICE_QUANTITIES = ("u", "ut", "u1", "u2", "f")


def write_slice_csv(path: Path, sd) -> None:
    comps = sorted(sd.comps)
    header = ["x1", "x2", "weight"] + [f"{c}:{q}" for c in comps for q in SLICE_QUANTITIES if q in sd.comps[c]]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = [sd.x1, sd.x2, sd.weights] + [
            sd.comps[c][q] for c in comps for q in SLICE_QUANTITIES if q in sd.comps[c]
        ]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_slice_csv(path: Path, s: float):
    import numpy as np

    from .fields import SliceData

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    comps: dict = {}
    for k, name in enumerate(header[3:], start=3):
        c, q = name.split(":")
        comps.setdefault(c, {})[q] = data[:, k]
    return SliceData(s, data[:, 0], data[:, 1], data[:, 2], comps)


def _energy_rows(slices, mass2, eta, diagnostics):
    from .evolve import energy_reports

    rows = []
    for comp in sorted(mass2):
        avail = {k: v for k, v in slices.items() if comp in v.comps and "ut" in v.comps[comp]}
        if not avail:
            continue
        for rep in energy_reports(avail, comp, mass2[comp], eta, diagnostics):
            rows.append([comp] + [_fmt(v) for v in rep.row()])
    return rows


def _write_energies(path: Path, rows) -> None:
    from .energy import EnergyReport

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", *EnergyReport.COLUMNS])
        w.writerows(rows)


def cmd_evolve(args) -> int:
    import numpy as np
    import scipy

    from . import __version__
    from .evolve import run

    cfg = load_config(args.config)
    out = Path(args.out or cfg.get("output") or "out")
    econf, si, state, norms, probes, diags = build_run(cfg)
    art = run(econf, si, state, probes)
    out.mkdir(parents=True, exist_ok=True)
    (out / "slices").mkdir(exist_ok=True)
    eta = cfg.get("system", {}).get("eta", 0.75)
    for s, sd in sorted(art.slices.items()):
        write_slice_csv(out / "slices" / f"s={s:g}.csv", sd)
    _write_energies(out / "energies.csv", _energy_rows(art.slices, si.mass2, eta, diags))
    meta = {
        "config": cfg,
        "grid": {"n": econf.grid.nx, "dx": econf.grid.dx, "half_width": econf.grid.half_width},
        "dt": art.dt,
        "steps": art.steps,
        "t_final": art.state.t,
        "mass2": si.mass2,
        "initial_norms": {k: {str(o): v for o, v in d.items()} for k, d in norms.items()},
        "versions": {"ehfol": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
    print(f"wrote {len(art.slices)} slices, {art.steps} steps to {out}")
    return 0


def cmd_energy_report(args) -> int:
    """Recompute energies from a run directory's slices/ and meta.json."""
    run_dir = Path(args.dir)
    try:
        meta = json.loads((run_dir / "meta.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {run_dir / 'meta.json'}: {exc}") from exc
    slices = {}
    for p in sorted((run_dir / "slices").glob("s=*.csv")):
        s = float(p.stem.split("=", 1)[1])
        slices[s] = read_slice_csv(p, s)
    if not slices:
        raise ConfigError(f"no slices found under {run_dir / 'slices'}")
    eta = args.eta if args.eta is not None else meta["config"].get("system", {}).get("eta", 0.75)
    rows = _energy_rows(slices, meta["mass2"], eta, args.diagnostics or [])
    from .energy import EnergyReport

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["component", *EnergyReport.COLUMNS])
    w.writerows(rows)
    return 0


def cmd_normalform_check(args) -> int:
    import numpy as np

    from .analytic import AnalyticField, gaussian_bump
    from .normalform import JET_KEYS, NormalFormContext, verify_identities

    ctx = NormalFormContext(args.c, resonance_floor=args.floor)
    fields = [
        gaussian_bump(1.0 + 0.25 * j, center=(0.3 * j, -0.2 * j), width=1.2, t0=3.0, t_width=2.0,
                      k=(0.7, -0.3 * j), omega=c, mass2=c * c)
        for j, c in enumerate(ctx.c)
    ]

    def jet_fn(t, x1, x2):
        return [{q: f.evaluate(q, t, x1, x2) for q in JET_KEYS} for f in fields]

    t0 = 3.0
    ax = np.linspace(-2.0 * t0 * 0.95, 2.0 * t0 * 0.95, args.grid)
    X1, X2 = np.meshgrid(ax, ax, indexing="ij")
    keep = np.hypot(X1, X2) <= 2.0 * t0
    hs = [args.h * 2**k for k in range(args.levels - 1, -1, -1)]
    rep = verify_identities(ctx, jet_fn, np.full(keep.sum(), t0), X1[keep], X2[keep], hs=hs)
    json.dump({"c": ctx.c.tolist(), "identities": rep}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_convergence(args) -> int:
    from .evolve import convergence_study

    res = convergence_study(args.kind, levels=args.levels, n0=args.n0)
    for n, e in zip(res["n"], res["errors"]):
        print(f"n={n} error={e:.6e}")
    print("observed orders: " + ", ".join(f"{p:.3f}" for p in res["orders"]))
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehfol", description="Wave-Klein-Gordon experiments on hyperboloidal slices.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("foliation-table", help="tabulate T, J, xi, zeta, omega on slices")
    f.add_argument("--s", type=_floats, default=[2.0, 5.0, 10.0])
    f.add_argument("--r-max", type=float, default=20.0)
    f.add_argument("--n", type=int, default=41)
    f.set_defaults(func=cmd_foliation_table)

    g = sub.add_parser("geometry-report", help="curvature, masses and couplings as JSON")
    g.add_argument("--preset", choices=["torus", "revolution", "r4"], required=True)
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--dphiS", type=_floats, default=None)
    g.add_argument("--lam", type=float, default=3.0)
    g.add_argument("--sign", type=int, choices=[-1, 1], default=-1)
    g.set_defaults(func=cmd_geometry_report)

    e = sub.add_parser("evolve", help="run a configured evolution")
    e.add_argument("--config", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evolve)

    r = sub.add_parser("energy-report", help="recompute energies from a run directory")
    r.add_argument("--dir", required=True)
    r.add_argument("--eta", type=float, default=None)
    r.add_argument("--diagnostics", nargs="*", choices=["conformal", "kg_decay"])
    r.set_defaults(func=cmd_energy_report)

    n = sub.add_parser("normalform-check", help="finite-difference residuals of the normal-form identities")
    n.add_argument("--c", type=_floats, required=True)
    n.add_argument("--grid", type=int, default=9)
    n.add_argument("--h", type=float, default=0.01)
    n.add_argument("--levels", type=int, default=3)
    n.add_argument("--floor", type=float, default=1e-8)
    n.set_defaults(func=cmd_normalform_check)

    c = sub.add_parser("convergence", help="plane-wave convergence on a periodic box")
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--kind", choices=["kg", "wave"], default="kg")
    c.add_argument("--n0", type=int, default=16)
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        _cap_threads()
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    from .fields import StaleHistoryError
    from .foliation import DomainError, QuadratureError
    from .geometry import GeometryError

    try:
        return args.func(args)
    except (ConfigError, GeometryError, DomainError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (FloatingPointError, StaleHistoryError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # includes resonance errors and invalid numeric parameters
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
