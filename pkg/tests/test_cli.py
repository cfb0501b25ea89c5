import json
import subprocess
import sys

import numpy as np
import pytest

from hybridplanner.cli import main
from hybridplanner.global_planner import read_path_csv

FAST = ["--override", "planner.max_iterations=50"]


def test_plan_writes_consistent_summary(tmp_path):
    assert main(["plan", "--scenario", "empty", "--out", str(tmp_path)] + FAST) == 0
    summary = json.loads((tmp_path / "plan_summary.json").read_text())
    path = read_path_csv(tmp_path / "path.csv")
    L = float(np.sum(np.linalg.norm(np.diff(path.configs, axis=0), axis=1)))
    assert summary["L"] == pytest.approx(L, abs=1e-9)
    cfg = json.loads((tmp_path / "effective_config.json").read_text())
    assert cfg["planner"]["max_iterations"] == 50


def test_run_and_export(tmp_path):
    assert main(["run", "--scenario", "empty", "--planner", "vpf", "--out", str(tmp_path)]) == 0
    for name in ("metrics.csv", "trial_log.csv", "effective_config.json"):
        assert (tmp_path / name).is_file()
    assert main(["export", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ee_trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,z"
    assert len(lines) > 100


def test_run_timeout_exit_code(tmp_path):
    code = main(["run", "--scenario", "empty", "--planner", "vpf", "--out", str(tmp_path),
                 "--override", "simulation.max_duration=0.1"])
    assert code == 3


def test_export_without_artifacts(tmp_path):
    assert main(["export", "--out", str(tmp_path)]) == 1


def test_bad_input_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["plan", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["run", "--scenario", "empty", "--out", str(tmp_path),
                 "--override", "vpf.nope=1"]) == 1


def test_compare_rejects_single_run(tmp_path):
    assert main(["compare", "--scenario", "empty", "--runs", "1", "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hybridplanner.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "compare" in out.stdout
