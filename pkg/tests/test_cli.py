import csv
import json
import subprocess
import sys

import pytest

from gkgeom import cli
from gkgeom import torusfield as tf


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "gkgeom.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "verify" in out.stdout


def test_missing_scenario_is_usage_error(tmp_path, capsys):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 2
    assert "scenario" in capsys.readouterr().err


def test_unknown_check_is_usage_error(tmp_path):
    assert cli.main(["verify", "--scenario", "kaehler", "--checks", "bogus", "--out", str(tmp_path)]) == 2


def test_odd_grid_is_usage_error(tmp_path):
    assert cli.main(["verify", "--scenario", "kaehler", "--grid", "9", "--out", str(tmp_path)]) == 2


def test_bad_json_reports_position(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"scenario": "kaehler",\n "grid": }')
    assert cli.main(["verify", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "kaehler", "colour": 1}))
    assert cli.main(["verify", "--config", str(cfg)]) == 2


def test_scenario_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "kaehler", "grid": 8, "potential": {"amplitude": 5.0, "modes": [[[0, 1, 0], [2, 1, 0]]]}}))
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "could not be built" in capsys.readouterr().err


def test_small_verify_run_is_reproducible(tmp_path):
    args = ["verify", "--scenario", "kaehler", "--grid", "8", "--tol", "1e-6", "--checks", "bismut_identities,sigchern2,partial_integrability"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    report = json.loads(a)
    assert [r["name"] for r in report] == ["bismut_identities", "sigchern2", "partial_integrability"]
    with open(tmp_path / "a" / "monitors.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["check", "residual", "tolerance", "passed"] and len(rows) == 4


def test_failing_check_exit_code(tmp_path):
    args = ["verify", "--scenario", "kaehler", "--grid", "16", "--tol", "1e-30", "--checks", "partial_integrability"]
    assert cli.main(args + ["--out", str(tmp_path)]) == 1


def test_canonical_flow_writes_state(tmp_path, capsys):
    args = ["flow", "--scenario", "kaehler", "--grid", "8", "--tol", "1e-6", "--type", "canonical", "--t-end", "0.2", "--dt", "0.1", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    fields = tf.load_fields(tmp_path / "state.bin")
    assert {"g", "b", "I", "J", "H"} <= set(fields)
    with open(tmp_path / "monitors.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "t" and len(rows) == 4
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["runs"]["canonical"]["t_final"] == pytest.approx(0.2)
    assert "canonical: t=0.2" in capsys.readouterr().out


def test_gkrf_both_reports_difference(tmp_path, capsys):
    args = ["flow", "--scenario", "kaehler", "--grid", "8", "--tol", "1e-6", "--type", "gkrf-both", "--dt", "1e-3", "--steps", "1", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert (tmp_path / "monitors_biherm.csv").exists() and (tmp_path / "monitors_generalized.csv").exists()
    assert "terminal difference" in capsys.readouterr().out


def test_flow_abort_keeps_partial_monitors(tmp_path):
    args = ["flow", "--scenario", "kaehler", "--grid", "8", "--tol", "1e-6", "--type", "gkrf-biherm", "--dt", "1e4", "--steps", "2", "--out", str(tmp_path)]
    assert cli.main(args) == 4
    with open(tmp_path / "monitors.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "t" and len(rows) == 2
    assert not (tmp_path / "state.bin").exists()
