import csv
import io
import json

import pytest

from ehfol import cli

SMALL = {
    "preset": "torus",
    "seed": 3,
    "system": {"rho": 1.0, "epsilon": 0.01, "cubic_enabled": True,
               "profiles": {"phi1": {"amp0": 1.0, "amp1": 0.5, "width": 2.0}}},
    "grid": {"n": 32, "half_width": 10.0},
    "evolution": {"t_end": 2.0},
    "probes": {"s": [2.2, 2.5], "diagnostics": ["conformal", "kg_decay"]},
}


def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_foliation_table(capsys):
    code, out, _ = run_cli(["foliation-table", "--s", "2,3", "--n", "5", "--r-max", "4"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:2] == ["s", "r"] and len(rows) == 1 + 2 * 5
    first = dict(zip(rows[0], rows[1]))
    assert float(first["T"]) == pytest.approx(2.0)


def test_geometry_report_torus(capsys):
    code, out, _ = run_cli(["geometry-report", "--preset", "torus", "--rho", "1.0"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["c2"] == [1.0] and rep["E_zero"] and rep["F_zero"] and rep["stable"]


def test_geometry_report_unstable(capsys):
    code, out, _ = run_cli(["geometry-report", "--preset", "torus", "--rho", "-1.0"], capsys)
    assert code == 0 and json.loads(out)["stable"] is False


def test_evolve_writes_artifacts_and_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(["evolve", "--config", cfg, "--out", str(a)], capsys)[0] == 0
    assert run_cli(["evolve", "--config", cfg, "--out", str(b)], capsys)[0] == 0
    for rel in ("slices/s=2.2.csv", "slices/s=2.5.csv", "energies.csv"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    header = (a / "slices/s=2.5.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["x1", "x2", "weight"] and "v2:f" in header
    meta = json.loads((a / "meta.json").read_text())
    assert meta["mass2"]["v2"] == 1.0 and meta["steps"] > 0

    # energy-report recomputes the same numbers from the saved slices
    code, out, _ = run_cli(["energy-report", "--dir", str(a), "--diagnostics", "conformal", "kg_decay"], capsys)
    assert code == 0
    assert out == (a / "energies.csv").read_text()


@pytest.mark.parametrize("patch,where", [
    ({"bogus": 1}, "<root>"),
    ({"grid": {"n": 8, "half_width": 4.0}}, "grid/n"),
    ({"system": {"eta": 1.2}}, "system/eta"),
])
def test_config_errors(tmp_path, capsys, patch, where):
    cfg = write_cfg(tmp_path, {**SMALL, **patch})
    code, _, err = run_cli(["evolve", "--config", cfg], capsys)
    assert code == 2 and where in err and "schema" in err


def test_missing_config(tmp_path, capsys):
    code, _, err = run_cli(["evolve", "--config", str(tmp_path / "none.json")], capsys)
    assert code == 2 and "cannot read" in err


def test_unknown_profile_component(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**SMALL, "system": {"rho": 1.0, "profiles": {"v9": {}}}})
    assert run_cli(["evolve", "--config", cfg], capsys)[0] == 2


def test_blow_up_exit_code(tmp_path, capsys):
    cfg = {
        "preset": "torus",
        "system": {"rho": 1.0, "epsilon": 50.0, "cubic_enabled": True,
                   "profiles": {"phi1": {"amp0": 1, "width": 1}, "v2": {"amp0": 1, "width": 1}}},
        "grid": {"n": 24, "half_width": 6},
        "evolution": {"t_end": 6},
    }
    code, _, err = run_cli(["evolve", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and "blow-up" in err


def test_normalform_check(capsys):
    code, out, _ = run_cli(["normalform-check", "--c", "1,1.5", "--grid", "5", "--h", "0.01", "--levels", "2"],
                           capsys)
    rep = json.loads(out)
    assert code == 0
    for name, r in rep["identities"].items():
        assert r["orders"][0] == pytest.approx(2.0, abs=0.15), name


def test_normalform_resonance(capsys):
    code, _, err = run_cli(["normalform-check", "--c", "2,1,1"], capsys)
    assert code == 2 and "resonant" in err


def test_convergence(capsys):
    code, out, _ = run_cli(["convergence", "--levels", "2", "--kind", "wave"], capsys)
    assert code == 0 and "observed orders" in out


def test_bad_arguments(capsys):
    assert run_cli(["geometry-report"], capsys)[0] == 2
    assert run_cli(["foliation-table", "--s", "a,b"], capsys)[0] == 2


def test_thread_variable(monkeypatch, capsys):
    monkeypatch.setenv("EHFOL_THREADS", "zero")
    assert run_cli(["convergence", "--levels", "2"], capsys)[0] == 2
    monkeypatch.setenv("EHFOL_THREADS", "2")
    assert run_cli(["convergence", "--levels", "2"], capsys)[0] == 0
