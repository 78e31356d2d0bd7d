import io
import json
import math

import pytest

from qddsel.cli import EXIT_ANALYSIS, EXIT_IO, EXIT_OK, EXIT_USAGE, main


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def run_json(*argv):
    code, text = run(*argv, "--format", "json")
    assert code == EXIT_OK, text
    return json.loads(text)


def rows_by(payload, key):
    return {r[key]: r for r in payload["rows"]}


def test_metrics_reference_motors(reference_path):
    rows = rows_by(run_json("metrics", reference_path), "name")
    assert 0.63 <= rows["RI50"]["s_m"] <= 0.70
    assert rows["RI50"]["s_t"] == pytest.approx(0.82, rel=0.05)
    assert rows["U8"]["s_m"] == pytest.approx(2.3, rel=0.05)
    assert rows["U8"]["s_t"] == pytest.approx(6.1, rel=0.05)
    assert "K_B=K_T assumed" in rows["U8"]["flags"]


def test_metrics_default_catalog_and_env(reference_path, tmp_path, monkeypatch):
    code, text = run("metrics", "RI50")
    assert code == EXIT_OK and "RI50" in text and "U8" not in text
    p = tmp_path / "one.csv"
    p.write_text("name,k_t_nm_a,k_m_nm_sqrtw,j_m_kgm2\nX,0.1,0.1,1e-5\n")
    monkeypatch.setenv("QDDSEL_CATALOG", str(p))
    payload = run_json("metrics")
    assert [r["name"] for r in payload["rows"]] == ["X"]


def test_metrics_unknown_motor(reference_path, capsys):
    code, _ = run("metrics", reference_path, "RI5O")
    assert code == EXIT_USAGE
    assert "RI50" in capsys.readouterr().err


def test_metrics_si_units(reference_path):
    rows = rows_by(run_json("metrics", reference_path, "RI50", "--units", "si"), "name")
    assert rows["RI50"]["s_m"] == pytest.approx(6.47e-4, rel=1e-2)


def test_rank(reference_path, tmp_path):
    payload = run_json("rank", reference_path, "--by", "s_m")
    assert [r["name"] for r in payload["rows"]] == ["RI50", "U8"]
    weighted = run_json("rank", reference_path, "--by", "s_t", "--weighted")
    assert weighted["title"].startswith("Ranking by m_s_t")

    empty = tmp_path / "empty.csv"
    empty.write_text("name,j_m_kgm2\n")
    code, text = run("rank", empty, "--by", "s_m")
    assert code == EXIT_OK and "note:" in text

    code, text = run("rank", reference_path, "--by", "k_ts")
    assert code == EXIT_OK
    unresolved = text.split("Unresolved", 1)[1]
    assert "RI50" in unresolved and "U8" in unresolved


def test_compare(reference_path):
    rows = rows_by(run_json("compare", reference_path, "RI50", "U8", "--match", "inertia"), "quantity")
    assert rows["K_Ta ratio"]["value"] == pytest.approx(2.73, abs=0.02)
    assert 3.3 <= rows["S_M advantage"]["value"] <= 3.6
    same = rows_by(run_json("compare", reference_path, "U8", "U8"), "quantity")
    for q in ("K_Ta ratio", "K_Ma ratio", "J_a ratio", "S_M advantage", "S_T advantage"):
        assert same[q]["value"] == pytest.approx(1.0, rel=1e-12)
    assert run("compare", reference_path, "RI50")[0] == EXIT_USAGE


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run("simulate", "--duration", 2, "--seed", 5, "--out", p)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    code, text = run("simulate", "--duration", 0.01, "--seed", 5, "--out", "-")
    assert code == EXIT_OK and text.startswith("# sample_rate_hz=")
    assert run("simulate", "--duration", 0, "--out", tmp_path / "c.csv")[0] == EXIT_USAGE


def test_sysid_single_noiseless(tmp_path):
    p = tmp_path / "run.csv"
    run("simulate", "--j", 6.55e-4, "--b", 2e-3, "--duration", 30, "--noise-torque", 0,
        "--noise-velocity", 0, "--out", p)
    (row,) = run_json("sysid", p)["rows"]
    assert row["j"] == pytest.approx(6.55e-4, rel=5e-3)
    assert row["vaf"] >= 99.9


def test_sysid_rotor_pair(tmp_path):
    n, j_nr, j_m = 7.5, 1.48e-4, 9.01e-6
    j_r = j_nr + n * n * j_m
    files = {"r": [], "nr": []}
    for key, j in (("r", j_r), ("nr", j_nr)):
        for amp, seed in ((0.5, 1), (1.0, 2)):
            p = tmp_path / f"{key}{seed}.csv"
            noise = 1.9 * amp * math.sqrt(j_r / j)
            code, _ = run("simulate", "--j", j, "--amplitude", amp, "--seed", seed,
                          "--noise-velocity", noise, "--out", p)
            assert code == EXIT_OK
            files[key].append(p)
    payload = run_json("sysid", *files["r"], "--no-rotor", *files["nr"], "--ratio", n)
    fit_table, inertia = payload
    assert len(fit_table["rows"]) == 6  # two runs plus pooled, per configuration
    rows = rows_by(inertia, "quantity")
    assert rows["J_m [kg*m^2]"]["value"] == pytest.approx(j_m, rel=0.10)
    assert rows["J_m 2sd [kg*m^2]"]["value"] > 0


def test_sysid_errors(tmp_path):
    bad = tmp_path / "nan.csv"
    bad.write_text("time_s,torque_nm,velocity_rad_s\n0,1,2\n0.001,nan,2\n0.002,1,2\n")
    assert run("sysid", bad)[0] == EXIT_IO
    assert run("sysid", tmp_path / "missing.csv")[0] == EXIT_IO

    p = tmp_path / "run.csv"
    run("simulate", "--duration", 10, "--out", p)
    assert run("sysid", p, "--band", "100,200")[0] == EXIT_ANALYSIS
    assert run("sysid", p, "--no-rotor", p)[0] == EXIT_USAGE


def test_thin_ring():
    rows = rows_by(run_json("thin-ring", "--mass", 0.034, "--radius", 0.0126), "quantity")
    assert float(f"{rows['J [kg*m^2]']['value']:.2g}") == 5.4e-6
    code, text = run("thin-ring", "--mass", 0.034, "--radius", 0.0126)
    assert "5.4e-06" in text


def test_convert():
    rows = rows_by(run_json("convert", "--winding", "wye", "--rll", 2.0), "quantity")
    assert rows["R_phase [ohm]"]["value"] == 1.0
    rows = rows_by(run_json("convert", "--winding", "delta", "--rll", 2.0, "--lll", 1e-3,
                            "--frame", "per-winding"), "quantity")
    assert rows["R_phase [ohm]"]["value"] == pytest.approx(3.0)
    assert run("convert", "--winding", "wye", "--rll", -1)[0] == EXIT_USAGE


def test_isolines():
    payload = run_json("isolines", "--metric", "s_m", "--levels", "1e-4,1e-3", "--samples", 5)
    assert len(payload["rows"]) == 10
    for r in payload["rows"]:
        assert r["y"] == pytest.approx(r["level"] * r["x"] ** 2, rel=1e-15)
    code, text = run("isolines", "--format", "csv")
    assert code == EXIT_OK and text.splitlines()[0] == "name,x,y,metric,level"
    assert "RI50," in text


def test_fit_constant(tmp_path):
    p = tmp_path / "kb.csv"
    p.write_text("speed,v\n" + "".join(f"{w},{0.094 * w}\n" for w in (10, 20, 30, 40)))
    rows = rows_by(run_json("fit-constant", p, "--x", "speed", "--y", "v"), "quantity")
    assert rows["slope"]["value"] == pytest.approx(0.094)
    assert run("fit-constant", p, "--x", "rpm", "--y", "v")[0] == EXIT_IO


def test_fit_constant_stall(tmp_path):
    from qddsel.dyno_sim import simulate_stall
    from qddsel.sysid import write_csv
    p = tmp_path / "stall.csv"
    write_csv(simulate_stall(0.105, seed=2), p)
    rows = rows_by(run_json("fit-constant", p, "--stall"), "quantity")
    assert abs(rows["slope"]["value"] - 0.105) <= 0.002
    assert rows["points"]["value"] == 17


def test_json_matches_table_precision(reference_path):
    payload = run_json("metrics", reference_path)
    _, text = run("metrics", reference_path)
    for r in payload["rows"]:
        line = next(ln for ln in text.splitlines() if ln.startswith(r["name"]))
        for key in ("s_m", "s_t", "m_s_m", "m_s_t"):
            assert f"{r[key]:.3g}" in line.split()


def test_usage_errors():
    assert run()[0] == EXIT_USAGE
    assert run("frobnicate")[0] == EXIT_USAGE
    assert run("rank", "--by", "nope")[0] == EXIT_USAGE
    assert run("--help")[0] == EXIT_OK


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "qddsel", "thin-ring", "--mass", "1", "--radius", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "J [kg*m^2]" in proc.stdout
