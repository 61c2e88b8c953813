import csv
import json
import subprocess
import sys

import pytest

from roughsee.cli import main, run_experiment
from roughsee.errors import DomainError


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "model.json").write_text(json.dumps({"kernel": "sin_tanh", "d": 4, "amplitude": 0.5}))
    (tmp_path / "params.json").write_text(json.dumps({"c": 0.2}))
    assert main(["noise", "sample", "--hurst", "0.45", "--modes", "4", "--scale", "0.3",
                 "--grid-n", "64", "--window", "0,1", "--seed", "3",
                 "--out", str(tmp_path / "noise.csv")]) == 0
    return tmp_path


def test_noise_csv_schema_and_manifest(workdir):
    with open(workdir / "noise.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "mode_1", "mode_2", "mode_3", "mode_4"]
    assert len(rows) == 66
    assert [float(x) for x in rows[1]] == [0.0, 0.0, 0.0, 0.0, 0.0]
    man = json.loads((workdir / "noise.csv.manifest.json").read_text())
    assert man["seeds"] == [3] and "noise.csv" in man["outputs"]
    assert set(man["versions"]) >= {"roughsee", "numpy"}


def test_noise_is_byte_identical_on_rerun(workdir):
    first = (workdir / "noise.csv").read_bytes()
    assert main(["run", str(workdir / "noise.csv.manifest.json")]) == 0
    assert (workdir / "noise.csv").read_bytes() == first


def test_area_then_solve_with_stored_area(workdir):
    assert main(["area", "build", "--noise", str(workdir / "noise.csv"),
                 "--lambda-file", str(workdir / "model.json"), "--out", str(workdir / "area.bin")]) == 0
    out = workdir / "run"
    assert main(["solve", "--model", str(workdir / "model.json"), "--noise", str(workdir / "noise.csv"),
                 "--area", str(workdir / "area.bin"), "--u0", "mode:1:0.05", "--params",
                 str(workdir / "params.json"), "--write-area", "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["c"] == 0.2 and diag["chen"] < 1e-10
    assert all(iv["contraction"] < 1 for iv in diag["intervals"])
    header = (out / "solution.csv").read_text().splitlines()[0]
    assert header == "time,u_1,u_2,u_3,u_4"
    assert (out / "area.csv").is_file()
    first = (out / "solution.csv").read_bytes()
    assert main(["run", str(out / "manifest.json")]) == 0
    assert (out / "solution.csv").read_bytes() == first


def test_rds_cocycle_report(workdir):
    out = workdir / "rds.json"
    assert main(["rds", "cocycle", "--noise", str(workdir / "noise.csv"), "--model",
                 str(workdir / "model.json"), "--params", str(workdir / "params.json"),
                 "--level", "4", "--tau-list", "0,0.25,0.5", "--t", "1", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["residuals"]
    assert [r["tau"] for r in rows] == [0.0, 0.25, 0.5]
    assert all(r["residual"] <= 1e-9 for r in rows)


def test_oracle_d1(tmp_path, capsys):
    assert main(["oracle", "--d", "1", "--grid-n", "128", "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "oracle.json").read_text())
    assert rep["pass"] and rep["relative_error"] <= 1e-3
    assert "max relative error" in capsys.readouterr().out


def test_schedule_example(capsys):
    assert main(["schedule", "--rho0", "1", "--c", "2", "--show", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["schedule", "--rho0", "1", "--c", "2", "--show", "3"]) == 0
    assert capsys.readouterr().out == first
    assert first.startswith("K = ")
    assert "intervals = about exp(" in first


def test_schedule_small_case_lists_all(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["schedule", "--rho0", "0.05", "--c", "0.3", "--T0", "0.1", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["all_checks_hold"] and not data["truncated"]
    assert data["i_star"] == len(data["intervals"])


def test_convergence_command(workdir):
    out = workdir / "conv"
    assert main(["convergence", "--noise", str(workdir / "noise.csv"), "--model", str(workdir / "model.json"),
                 "--params", str(workdir / "params.json"), "--levels", "2..5", "--out", str(out)]) == 0
    data = json.loads((out / "convergence.json").read_text())
    assert data["levels"] == [2, 3, 4, 5] and len(data["ratios"]) == 2
    assert (out / "distances.csv").read_text().startswith("level,next_level,distance")


def test_invalid_params_exit_2(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"beta_p": 0.46}))
    code = main(["schedule", "--rho0", "1", "--c", "2", "--params", str(tmp_path / "bad.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error [roughsee.solver]:")
    assert "beta'" in err and "H" in err


def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["solve", "--model", str(tmp_path / "nope.json"), "--noise", "x.csv",
                 "--out", str(tmp_path)]) == 2
    assert "file not found" in capsys.readouterr().err


def test_numeric_failure_exit_3(workdir, capsys):
    (workdir / "tight.json").write_text(json.dumps({"c": 0.2, "fp_max_iter": 1, "max_halvings": 0}))
    code = main(["solve", "--model", str(workdir / "model.json"), "--noise", str(workdir / "noise.csv"),
                 "--u0", "mode:1:0.05", "--params", str(workdir / "tight.json"), "--out", str(workdir / "f")])
    assert code == 3
    assert capsys.readouterr().err.startswith("numerical failure [roughsee.solver]")


def test_run_experiment_validates_fields(tmp_path):
    with pytest.raises(DomainError):
        run_experiment({"kind": "nope"})
    with pytest.raises(DomainError):
        run_experiment({"kind": "schedule", "rho0": 1.0})
    with pytest.raises(DomainError):
        run_experiment({"kind": "schedule", "rho0": 1.0, "c": 2.0, "colour": 1})
    assert run_experiment({"kind": "schedule", "rho0": 0.0, "c": 0.1, "show": 1}) == 0


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "roughsee.cli", "schedule", "--rho0", "0", "--c", "0.1"],
                         capture_output=True, text=True, env={"ROUGHSEE_THREADS": "1", "PATH": ""})
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("K = ")
