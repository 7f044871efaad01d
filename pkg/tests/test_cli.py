import json
import subprocess
import sys

import pytest

from optoqet.cli import main


def test_point_ok(capsys):
    assert main(["point", "--E", "1e9", "--T", "0.08"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["status"] == "ok" and rec["variant"] == "quadratic" and rec["I11"] > 0


def test_point_linear_variant(capsys):
    assert main(["point", "--E", "1e9", "--T", "0", "--variant", "linear"]) == 0
    assert json.loads(capsys.readouterr().out)["variant"] == "linear"


def test_point_model_error(capsys):
    assert main(["point", "--E", "1e12", "--T", "0"]) == 3
    out = capsys.readouterr()
    assert json.loads(out.out)["status"] == "unstable"
    assert "unstable" in out.err


@pytest.mark.parametrize(
    "argv",
    [
        ["point", "--E", "1e9", "--T", "-1"],
        ["point", "--E", "1e9", "--T", "0", "--variant", "cubic"],
        ["point", "--E", "1e9", "--T", "0", "--runs", "0"],
        ["point", "--E", "abc", "--T", "0"],
        ["figure", "fig9"],
        ["sweep"],
        ["nonsense"],
    ],
)
def test_configuration_errors(argv, capsys):
    assert main(argv) == 2


def test_sweep_config_errors(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("formats =\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    bad.write_text("drive_grid = 1e9, 1e8\n")
    assert main(["sweep", "--config", str(bad)]) == 2


def test_sweep_writes_files(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    out = tmp_path / "out"
    cfg.write_text(
        "# two drives, one temperature\n"
        "drive_grid = 1e9, 1e12\n"
        "temperatures = 0.08\n"
        "formats = csv, json, svg\n"
        f"out = {out}\n"
    )
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert {p.name for p in out.iterdir()} == {"records.csv", "meta.json", "sweep.svg"}
    meta = json.loads((out / "meta.json").read_text())
    assert meta["status_counts"] == {"ok": 1, "unstable": 1}
    assert "1 of 2 points flagged" in capsys.readouterr().err


def test_figure_writes_preset_svg(tmp_path, capsys):
    assert main(["figure", "fig4b", "--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"records.csv", "meta.json", "fig4b.svg"}


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--suite", "decoupled_oracle", "--suite", "decomposition"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] and len(summary["suites"]) == 2

    tol = tmp_path / "tol.cfg"
    tol.write_text("default = 1e-20\n")
    report = tmp_path / "summary.json"
    code = main(["validate", "--suite", "decoupled_oracle", "--tol-overrides", str(tol), "--json-out", str(report)])
    assert code == 1
    assert json.loads(report.read_text())["failed"] == ["decoupled_oracle"]

    tol.write_text("nonsense = 1\n")
    assert main(["validate", "--tol-overrides", str(tol)]) == 2
    assert main(["validate", "--suite", "nonsense"]) == 2


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "optoqet", "point", "--E", "5e8", "--T", "0.001"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["status"] == "ok"
