import csv
import json

import numpy as np
import pytest

from cliffmoll import cli
from cliffmoll.algebra import Multivector
from cliffmoll.dirac import CalibrationError, CalibrationRow
from cliffmoll.grid import ball_domain, build_grid, read_field, sample_field, write_field


def read_table(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# cliffmoll ")
    return lines[0], list(csv.DictReader(lines[1:]))


def test_verify_algebra(tmp_path):
    assert cli.main(["verify", "--suite", "algebra", "--out-dir", str(tmp_path)]) == 0
    header, rows = read_table(tmp_path / "verify_algebra.csv")
    assert "seed=0" in header
    assert len(rows) == 9 and all(r["passed"] == "true" for r in rows)
    assert json.loads((tmp_path / "config.json").read_text())["suite"] == "algebra"


def test_verify_mollifier_mass(tmp_path):
    assert cli.main(["verify", "--suite", "mollifier-mass", "--n", "2", "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "verify_mollifier_mass.csv")
    mass = [r for r in rows if r["check"].startswith("normalized mass")]
    assert len(mass) == 3 and all(float(r["measured"]) <= 1e-6 for r in mass)


def test_unknown_suite_and_bad_domain(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["verify", "--suite", "nope", "--out-dir", str(out)]) == 2
    assert cli.main(["mollify", "--domain", "disk:1", "--out-dir", str(out)]) == 2
    assert cli.main(["mollify", "--gamma", "1,2,3", "--out-dir", str(out)]) == 2
    assert not out.exists()
    assert "unknown suite" in capsys.readouterr().err


def test_mollify_named_field_orders(tmp_path):
    assert cli.main(["mollify", "--field", "sin1", "--eps", "0.4,0.2", "--res", "128",
                     "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "mollify.csv")
    assert [float(r["eps"]) for r in rows] == [0.4, 0.2]
    assert float(rows[1]["sup_error"]) < float(rows[0]["sup_error"])
    f = read_field(tmp_path / "mollified.clf")
    assert f.grid.dims == (128, 128)


def test_mollify_constant_is_exact(tmp_path):
    assert cli.main(["mollify", "--field", "const", "--eps", "0.4,0.2,0.1", "--res", "128",
                     "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "mollify.csv")
    assert all(float(r["sup_error"]) <= 1e-10 for r in rows)


def test_mollify_from_file_and_missing_file(tmp_path):
    g = build_grid([-1.1, -1.1], [1.1, 1.1], 64)
    f = sample_field(lambda x: np.stack([np.cos(x[..., 1])] + [0 * x[..., 0]] * 3, -1), g, vectorized=True)
    src = tmp_path / "in.clf"
    write_field(f, src)
    out = tmp_path / "a"
    assert cli.main(["mollify", "--input", str(src), "--eps", "0.3", "--out-dir", str(out)]) == 0
    _, rows = read_table(out / "mollify.csv")
    assert rows[0]["sup_error"] == "nan"
    missing = tmp_path / "b"
    assert cli.main(["mollify", "--input", str(tmp_path / "none.clf"), "--out-dir", str(missing)]) == 2
    assert not missing.exists()


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"res": 64, "eps": [0.3], "field": "sin1", "seed": 7}))
    out = tmp_path / "o"
    assert cli.main(["mollify", "--config", str(conf), "--res", "48", "--out-dir", str(out)]) == 0
    written = json.loads((out / "config.json").read_text())
    assert written["res"] == 48 and written["eps"] == [0.3] and written["seed"] == 7
    header, _ = read_table(out / "mollify.csv")
    assert "res=48" in header and "seed=7" in header
    conf.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["mollify", "--config", str(conf), "--out-dir", str(tmp_path / "x")]) == 2


def test_outputs_are_deterministic(tmp_path):
    args = ["verify", "--suite", "algebra", "--seed", "11"]
    assert cli.main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "verify_algebra.csv").read_bytes()
    assert a == (tmp_path / "b" / "verify_algebra.csv").read_bytes()
    assert cli.main(["verify", "--suite", "algebra", "--seed", "12", "--out-dir", str(tmp_path / "c")]) == 0
    assert a != (tmp_path / "c" / "verify_algebra.csv").read_bytes()


def test_smooth_approx_budgets(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["smooth-approx", "--field", "sin1", "--beta", "0.1", "--res", "128", "--out-dir", str(a)]) == 0
    assert cli.main(["smooth-approx", "--field", "sin1", "--beta", "0.05", "--res", "128", "--out-dir", str(b)]) == 0
    _, ra = read_table(a / "smooth_approx.csv")
    _, rb = read_table(b / "smooth_approx.csv")
    assert float(ra[0]["total"]) <= 0.1
    for x, y in zip(ra, rb):
        assert float(y["budget"]) == pytest.approx(float(x["budget"]) / 2)


def test_smooth_approx_failure_reports_layers(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["smooth-approx", "--field", "sin1", "--beta", "1e-12", "--res", "64",
                     "--out-dir", str(out)]) == 1
    err = capsys.readouterr().err
    assert "component,layer,eps,budget,attained" in err
    assert not out.exists()


def test_solve_bvp_constant(tmp_path):
    assert cli.main(["solve-bvp", "--field", "const", "--res", "64", "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "solve_bvp.csv")
    assert float(rows[0]["reference_error"]) < 1e-4
    sol = read_field(tmp_path / "solution.clf")
    assert np.allclose(sol.data[sol.mask], [1, 0, 0, 0], atol=1e-4)


def test_nhbvp_zero_rhs_matches_bvp(tmp_path):
    common = ["--field", "expgamma", "--gamma", "0.3,-0.2", "--res", "48"]
    assert cli.main(["solve-bvp", *common, "--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["solve-nhbvp", *common, "--rhs", "zero", "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "solution.clf").read_bytes() == (tmp_path / "b" / "solution.clf").read_bytes()


def test_nhbvp_unit_rhs(tmp_path):
    assert cli.main(["solve-nhbvp", "--rhs", "const", "--res", "48", "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "solve_nhbvp.csv")
    assert float(rows[0]["residual_max"]) < 1e-5


def test_calibration_failure_prints_table(tmp_path, monkeypatch, capsys):
    rows = [CalibrationRow(s, "sphere-area", 6.28, b, 0.5, 0.5) for s in (-1, 1) for b in (-1, 1)]

    def fail(*args, **kwargs):
        raise CalibrationError("no kernel convention meets the calibration tolerances", rows)

    monkeypatch.setattr(cli, "calibrate_kernel", fail)
    out = tmp_path / "o"
    assert cli.main(["solve-bvp", "--res", "32", "--out-dir", str(out)]) == 1
    err = capsys.readouterr().err
    assert "grid_residual" in err and err.count("sphere-area") == 4
    assert not out.exists()


def test_alexander_and_convergence_verbs(tmp_path):
    assert cli.main(["alexander", "--res", "24", "--radii", "0.5,1", "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "alexander.csv")
    assert len(rows) == 2
    _, fit = read_table(tmp_path / "alexander_fit.csv")
    assert abs(float(fit[0]["slope"]) - 1) < 0.1
    assert cli.main(["convergence", "--study", "fundamental-solution", "--levels", "16,32",
                     "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "convergence_fundamental_solution.csv")
    assert len(rows) == 4 and abs(float(rows[1]["order"]) - 2) < 0.3
    assert cli.main(["convergence", "--study", "nope", "--out-dir", str(tmp_path / "x")]) == 2


def test_named_fields():
    x = np.array([[0.5, -0.25]])
    assert np.allclose(cli.named_field("bp", 2, (0, 0))(x), [[0.5, 0, 0, np.cos(-0.25)]])
    assert np.allclose(cli.named_field("abs1sin2", 2, (0, 0))(-x), [[0.5, np.sin(0.25), 0, 0]])
    with pytest.raises(cli.UsageError):
        cli.named_field("bp", 1, (0,))
    with pytest.raises(cli.UsageError):
        cli.named_field("unknown", 2, (0, 0))
    assert isinstance(cli.parse_domain("box:0:1,2", 2).hi, tuple)
    assert cli.parse_domain("ball:2", 3) == ball_domain([0, 0, 0], 2.0)
    assert Multivector.scalar(2).n == 2
