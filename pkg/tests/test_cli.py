import csv
import json
import subprocess
import sys

import jsonschema
import pytest

from afem.cli import SUMMARY_SCHEMA, main


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_lshape(tmp_path):
    assert main(["run", "--problem", "lshape", "--estimator", "improved", "--tol", "1e-2", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    assert summary["stop_reason"] == "tolerance"
    assert -0.6 <= summary["rates"]["err"]["slope"] <= -0.4
    rows = read_csv(tmp_path / "history.csv")
    assert len(rows) == summary["iterations"]


def test_run_interface_no_refinement(tmp_path):
    assert main(["run", "--problem", "interface4", "--estimator", "improved", "--tol", "1e-2",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    assert summary["iterations"] == 1
    assert summary["final"]["eta"] <= 1e-10
    assert summary["config"]["recovery_mode"] is None  # chosen automatically


def test_invalid_problem_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--problem", "nope"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_run_is_reproducible(tmp_path):
    args = ["run", "--problem", "kellogg", "--max-iter", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 1  # stops on the iteration cap
    assert main(args + ["--out", str(tmp_path / "b")]) == 1
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "lshape", "tol": 0.5, "theta_e": 0.7, "max_iter": 2, "depth": 1}))
    out = tmp_path / "o"
    main(["run", "--config", str(cfg), "--max-iter", "3", "--out", str(out)])
    conf = json.loads((out / "summary.json").read_text())["config"]
    assert conf["theta_E"] == 0.7 and conf["max_iterations"] == 3 and conf["tolerance"] == 0.5
    assert conf["theta_0"] == 0.5 and conf["refinement_depth"] == 1


def test_vtk_and_timing(tmp_path):
    assert main(["run", "--problem", "layer", "--max-iter", "2", "--vtk", "--timing", "--out", str(tmp_path)]) == 1
    assert sorted(p.name for p in tmp_path.glob("mesh_*.vtk")) == ["mesh_0000.vtk", "mesh_0001.vtk"]
    text = (tmp_path / "mesh_0001.vtk").read_text()
    assert "POINT_DATA" in text and "VECTORS G double" in text and "SCALARS eta_K double 1" in text
    rows = read_csv(tmp_path / "history.csv")
    assert all(float(r["seconds"]) > 0 for r in rows)


def test_compare_single_estimator_rejected(tmp_path):
    assert main(["compare", "--problem", "lshape", "--estimator", "improved", "--out", str(tmp_path)]) == 2


def test_compare_checkerboard_first_iteration(tmp_path):
    main(["compare", "--problem", "checkerboard", "--estimator", "zz", "improved", "--max-iter", "1",
          "--out", str(tmp_path)])
    rows = {r["estimator"]: r for r in read_csv(tmp_path / "compare.csv")}
    assert float(rows["zz"]["final_eta"]) == 0.0
    assert float(rows["improved"]["final_eta"]) > 0.0


@pytest.mark.slow
def test_compare_lshape_residual_vs_improved(tmp_path):
    assert main(["compare", "--problem", "lshape", "--estimator", "residual", "improved", "--tol", "1e-2",
                 "--depth", "1", "--out", str(tmp_path)]) == 0
    rows = {r["estimator"]: r for r in read_csv(tmp_path / "compare.csv")}
    res, imp = rows["residual"], rows["improved"]
    assert int(res["final_ndof"]) > int(res["ndof_err_below_tol"])
    assert 0.85 <= float(imp["final_effectivity"]) <= 1.25
    assert 4 <= float(res["final_effectivity"]) <= 6
    assert (tmp_path / "history_residual.csv").exists()


def test_validate_and_export(tmp_path, capsys):
    assert main(["validate-problem", "--problem", "kellogg"]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    assert main(["validate-problem", "--problem", "checkerboard"]) == 0
    capsys.readouterr()
    assert main(["export-mesh", "--problem", "lshape", "--out", str(tmp_path / "l.txt"), "--refine", "1"]) == 0
    nv, ne, nb = map(int, (tmp_path / "l.txt").read_text().splitlines()[0].split())
    assert ne == 48
    # Euler characteristic of a simply connected domain: V - E + F = 1 with 2E = 3F + N_b
    assert nv - (3 * ne + nb) // 2 + ne == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "afem", "run", "--problem", "interface4", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "afem", "compare", "--problem", "lshape", "--estimator", "zz"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert bad.returncode == 2 and "at least two" in bad.stderr


def test_unwritable_output_is_an_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--problem", "interface4", "--out", str(blocker / "sub")]) == 1
