import csv
import json
import subprocess
import sys

import pytest

from scenarios import ess, two_bus, with_devices
from synergy.cli import main


@pytest.fixture
def small(tmp_path):
    doc = with_devices(two_bus(T=2, config={"k_max": 50}), ess=[ess()])
    path = tmp_path / "small.json"
    path.write_text(json.dumps(doc))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_centralized_fixture_summary(tmp_path, capsys):
    assert main(["run", "centralized", "fixture", "--vartheta", "0", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == "optimal"
    assert summary["socp_residual"] <= 1e-5
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["objective"] == summary["objective"]
    assert len(rows(tmp_path / "generation.csv")) == 4


def test_distributed_run_writes_trace_and_log(small, tmp_path, capsys):
    out = tmp_path / "dist"
    assert main(["run", "distributed", str(small), "--vartheta", "0", "--out", str(out), "--plotdata"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["privacy"].startswith("PASS")
    assert summary["gap"] <= 1e-2
    trace = rows(out / "trace.csv")
    assert float(trace[-1]["gamma_p"]) <= 1e-2
    assert (out / "messages.ndjson").stat().st_size > 0
    assert (out / "plot_residuals.csv").exists() and (out / "plot_power_stack.csv").exists()


def test_power_stack_balances(small, tmp_path, capsys):
    main(["run", "centralized", str(small), "--out", str(tmp_path)])
    for r in rows(tmp_path / "power.csv"):
        assert float(r["supply"]) == pytest.approx(float(r["demand"]), abs=1e-6)


def test_outputs_are_deterministic(small, tmp_path, capsys):
    for name in ("a", "b"):
        main(["run", "admm", str(small), "--kmax", "5", "--out", str(tmp_path / name)])
    for f in ("trace.csv", "messages.ndjson", "summary.json", "generation.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_mode_flag_equals_positional(small, tmp_path, capsys):
    main(["run", "--mode", "centralized", str(small), "--out", str(tmp_path / "a")])
    main(["run", "centralized", str(small), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "summary.json").read_text() == (tmp_path / "b" / "summary.json").read_text()


def test_compare_sweep(small, capsys):
    assert main(["compare", str(small), "--vartheta", "0", "-1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("vartheta,mode,status,objective")
    assert len(lines) == 3


@pytest.mark.parametrize("argv", [["run", "sideways", "fixture"], ["compare", "fixture", "--vartheta"],
                                  ["run", "centralized", "fixture", "--solver", "gurobi"]])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 2


def test_bad_scenario_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.json" in capsys.readouterr().err


def test_module_help():
    proc = subprocess.run([sys.executable, "-m", "synergy.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "compare" in proc.stdout
