import csv
import json
import subprocess
import sys

import pytest

from nematiclab.cli import main

T0_CONFIG = """[params]
a = 0
b = 1
c = 1
[grid]
nx = 16
ny = 16
[run]
T = 0
"""


def test_params_output(capsys):
    assert main(["params", "--a", "0", "--b", "1", "--c", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("lo = -0.16666666666666")
    assert out[1].startswith("hi = 0.3333333333333")
    assert out[2].startswith("eta0 = 0.408248290463")
    assert out[3] == "s_plus = 0.5"


def test_params_bad_values(capsys):
    assert main(["params", "--c", "-1"]) == 2
    assert "c > 0" in capsys.readouterr().err
    assert main(["params", "--a", "1"]) == 2  # negative discriminant


def test_verify_regime_violation(capsys):
    assert main(["verify-inequalities", "--a", "1", "--b", "1", "--c", "1", "--samples", "100"]) == 2
    assert "a <= b^2/24c" in capsys.readouterr().err


def test_verify_small_run(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify-inequalities", "--samples", "5000", "--output", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pass"] is True and len(rep["reports"]) == 4
    assert json.loads(capsys.readouterr().out) == rep


def test_eig_check(capsys):
    assert main(["eig-check", "--samples", "2000", "--seed", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["pass"] and set(rep["checks"]) == {
        "charpoly_residual", "zero_sum", "ordering", "weyl", "rotation_invariance"}


def test_simulate_zero_horizon(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(T0_CONFIG)
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path / "out")]) == 0
    rows = list(csv.reader((tmp_path / "out" / "monitor.csv").open()))
    assert len(rows) == 2 and rows[1][0] == "0"
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["pass"] is True and summary["t_final"] == 0.0
    assert (tmp_path / "out" / "final_Q.bin").exists()


def test_simulate_short_run(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(T0_CONFIG.replace("T = 0", "T = 0.05\ndt = 5e-3\nmonitor_interval = 0.025")
                   + "[initial]\nu0 = taylor-green\n[output]\nsnapshots = false\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(out)]) == 0
    assert len((out / "monitor.csv").read_text().splitlines()) == 4
    assert not (out / "final_Q.bin").exists()


def test_simulate_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(T0_CONFIG.replace("c = 1", "c = -1") + "foo = 1\n")
    assert main(["simulate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "c > 0 violated" in err and "run.foo" in err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_simulate_cfl_failure(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(T0_CONFIG.replace("T = 0", "T = 1\ndt = 0.5") + "[initial]\nscaling = none\n")
    assert main(["simulate", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 1
    assert "stability limit" in capsys.readouterr().err


def test_regularization_study_command(tmp_path, capsys):
    cfg = tmp_path / "reg.ini"
    cfg.write_text("[params]\nL = 0.2\na = 0\nb = 1\nc = 1\n[grid]\nnx = 16\nny = 16\n"
                   "[run]\nscenario = regularization\ndt = 1e-2\nT = 0.1\n"
                   "[initial]\nkmax = 2\n[regularization]\ndeltas = 0.4, 0.2, 0.1\n")
    assert main(["regularization-study", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "regularization.csv").read_text().splitlines()
    assert len(lines) == 4
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["scenario"] == "regularization" and summary["pass"] is True


def test_output_dir_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(T0_CONFIG)
    monkeypatch.setenv("NEMATICLAB_OUTPUT_DIR", str(tmp_path / "env-out"))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "env-out" / "monitor.csv").exists()


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["params", "--a", "zero"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nematiclab", "params"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("lo = ")
