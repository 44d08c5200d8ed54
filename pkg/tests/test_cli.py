import json
from pathlib import Path

import numpy as np
import pytest

from kernel_ns.cli import EXIT_INVALID, EXIT_NO_CONTRACTION, EXIT_OK, main
from kernel_ns.output import read_field_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

LINEAR = {
    "system": "linear",
    "linear": {"phi": {"preset": "steps", "value": 1.0, "pieces": [[0.0, 100.0, 1.0]]}, "jumps": [0.0],
               "eps": 0.5, "f0": {"preset": "gaussian", "center": 0.3}},
    "grid": {"nx": 129}, "time": {"T": 0.25, "nt": 8},
    "oracle": {"enabled": True, "nx": 257, "nt": 40},
}

PSYSTEM = {
    "system": "psystem",
    "physics": {"pressure": {"model": "power_law", "exponent": 1.4}},
    "data": {"v0": {"preset": "steps", "value": 1.0, "pieces": [[0.0, 100.0, 0.1]]}, "jumps": [0.0], "lam0": 1.0,
             "u0": {"preset": "gaussian", "amplitude": 0.1}},
    "grid": {"nx": 257}, "time": {"T": 0.05, "nt": 8}, "fixed_point": {"eps": 0.5},
    "probe": {"pairs": 2},
}


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["solve-psystem", "--config", str(CONFIGS / "invalid_vacuum.json"), "--out", str(tmp_path)]) \
        == EXIT_INVALID
    assert "lambda0 invariant" in capsys.readouterr().err
    bad = write(tmp_path, {"system": "linear", "bogus": 1})
    assert main(["solve-linear", "--config", bad, "--out", str(tmp_path)]) == EXIT_INVALID


def test_wrong_subcommand_for_system(tmp_path):
    assert main(["solve-psystem", "--config", write(tmp_path, LINEAR), "--out", str(tmp_path)]) == EXIT_INVALID


def test_solve_linear_outputs_are_deterministic(tmp_path):
    cfg = write(tmp_path, LINEAR)
    for run in ("a", "b"):
        assert main(["solve-linear", "--config", cfg, "--out", str(tmp_path / run)]) == EXIT_OK
    first = (tmp_path / "a" / "solution.csv").read_bytes()
    assert first == (tmp_path / "b" / "solution.csv").read_bytes()
    assert first.startswith(b"# config_hash=")
    diag = json.loads((tmp_path / "a" / "diagnostics.json").read_text())
    assert diag["config_hash"] in first.decode().splitlines()[0]
    report = json.loads((tmp_path / "a" / "oracle_report.json").read_text())
    assert report["final_time_errors"]["f"] < 2e-2
    assert (tmp_path / "a" / "solution.png").exists()


def test_solve_psystem_and_probe(tmp_path):
    cfg = write(tmp_path, PSYSTEM)
    assert main(["solve-psystem", "--config", cfg, "--out", str(tmp_path / "s")]) == EXIT_OK
    diag = json.loads((tmp_path / "s" / "diagnostics.json").read_text())
    assert diag["min_v"] >= 0.5 and diag["iterations"] <= 25
    times, x, values = read_field_csv(tmp_path / "s" / "solution.csv")
    assert values.shape == (len(times), len(x))
    assert main(["contraction-probe", "--config", cfg, "--out", str(tmp_path / "p")]) == EXIT_OK
    probe = json.loads((tmp_path / "p" / "probe.json").read_text())
    assert probe["verdict"] == "PASS" and len(probe["ratios"]) == 2


def test_probe_threshold_violation_exits_2(tmp_path):
    data = dict(PSYSTEM, probe={"pairs": 1, "threshold": 1e-6})
    assert main(["contraction-probe", "--config", write(tmp_path, data), "--out", str(tmp_path)]) \
        == EXIT_NO_CONTRACTION


def test_collapsed_time_mesh_still_solves(tmp_path):
    data = dict(LINEAR, grid={"nx": 65}, time={"T": 0.1, "nt": 8}, oracle={"enabled": False})
    assert main(["solve-linear", "--config", write(tmp_path, data), "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "diagnostics.json").read_text())["residual_L1"] is None


def test_convergence_needs_three_levels(tmp_path):
    assert main(["convergence", "--config", write(tmp_path, LINEAR), "--levels", "2", "--out", str(tmp_path)]) \
        == EXIT_INVALID


def test_kernel_test_and_norms(tmp_path, capsys):
    assert main(["kernel-test", "--out", str(tmp_path / "k")]) == EXIT_OK
    ident = json.loads((tmp_path / "k" / "kernel_identities.json").read_text())["identities"]
    assert ident["normalization"] <= 1e-10 and ident["ratio_drift"] < 1e-2
    cfg = write(tmp_path, LINEAR)
    assert main(["solve-linear", "--config", cfg, "--out", str(tmp_path / "l")]) == EXIT_OK
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "LpT", "p": 2.0, "T": 0.25}))
    capsys.readouterr()
    assert main(["norms", "--field", str(tmp_path / "l" / "solution.csv"), "--spec", str(spec),
                 "--out", str(tmp_path / "n")]) == EXIT_OK
    printed = float(capsys.readouterr().out.strip())
    stored = json.loads((tmp_path / "n" / "norms.json").read_text())["value"]
    assert printed == pytest.approx(stored) and np.isfinite(stored)
