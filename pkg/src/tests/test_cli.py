# src/tests/test_cli.py
import os

import pytest

from src.db import load_reports
from src.main import main, run_scenario
from src.scenario import PRESETS

SMALL_SPIN = """
[scenario]
name = small-spin
layer = spin
checks = pauli, rotor, larmor
[hamiltonian]
field = 0, 0, 0.5
inertia = 2
larmor = 1
[grid]
l_max = 6
[integrator]
t_end = 2pi
"""


def test_run_degenerate_preset(tmp_path):
    report = run_scenario("degenerate", out=str(tmp_path), log_level='DEBUG')
    assert report.passed
    assert [c.reason for c in report.checks] == ["degenerate", "degenerate"]
    assert os.path.exists(tmp_path / "degenerate.csv")


def test_rerun_is_byte_identical(tmp_path):
    scenario = tmp_path / "small_spin.ini"
    scenario.write_text(SMALL_SPIN, encoding="utf-8")
    first = run_scenario(str(scenario), out=str(tmp_path / "a"))
    run_scenario(str(scenario), out=str(tmp_path / "b"))
    assert [c.name for c in first.checks] == ["pauli.deviation", "rotor.energy_error", "larmor.deviation"]
    for name in ("small-spin.csv", "small-spin_larmor.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "small-spin.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == f"# config_hash={first.config_hash}"


def test_run_command_text_format_and_db(tmp_path):
    db = tmp_path / "db" / "runs.db"
    code = main(["run", "degenerate", "--out", str(tmp_path), "--format", "text", "--to-db", "--db", str(db)])
    assert code == 0
    text = (tmp_path / "degenerate.txt").read_text(encoding="utf-8")
    assert "PASS equivalence 0.0" in text
    rows = load_reports(str(db))
    assert rows["check"].tolist() == ["equivalence", "energy"]
    assert set(rows["scenario"]) == {"degenerate"}


def test_list_command(capsys):
    assert main(["list"]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == sorted(PRESETS)


def test_compare_command(tmp_path, capsys):
    for sub in ("a", "b"):
        main(["run", "degenerate", "--out", str(tmp_path / sub)])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a" / "degenerate.csv"), str(tmp_path / "b" / "degenerate.csv")]) == 0
    assert "reports match" in capsys.readouterr().out
    edited = tmp_path / "b" / "degenerate.csv"
    edited.write_text(edited.read_text(encoding="utf-8").replace("energy,0.0", "energy,1.0"), encoding="utf-8")
    assert main(["compare", str(tmp_path / "a" / "degenerate.csv"), str(edited)]) == 1
    assert "energy" in capsys.readouterr().out


def test_missing_scenario_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_scenario(str(tmp_path / "missing.ini"))
