# src/tests/test_export.py
import math

import numpy as np
import pandas as pd
import pytest

from src.export import compare_reports, emit_report, read_report
from src.fieldio import read_field
from src.grids import make_uniform_grid
from src.quantum import plane_wave
from src.suites import Check, RunReport


def _report(value_a=0.1, checks=None):
    checks = checks or [Check("a", value_a, 1.0), Check("b", 2.0, 1.0, "too big")]
    return RunReport("demo", checks, "abc123", wall_time=3.5)


def test_csv_layout(tmp_path):
    paths = emit_report(_report(), str(tmp_path))
    assert paths == [str(tmp_path / "demo.csv")]
    lines = (tmp_path / "demo.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["# config_hash=abc123", "check,value,tolerance,pass,reason",
                     "a,0.1,1.0,True,", "b,2.0,1.0,False,too big"]


def test_text_layout(tmp_path):
    emit_report(_report(), str(tmp_path), "text")
    lines = (tmp_path / "demo.txt").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# config_hash=abc123"
    assert "PASS a 0.1 <= 1.0" in lines
    assert "FAIL b 2.0 <= 1.0 (too big)" in lines
    assert lines[-1] == "1/2 checks passed"
    with pytest.raises(ValueError):
        emit_report(_report(), str(tmp_path), "xml")


def test_series_and_fields_are_written(tmp_path):
    report = _report()
    report.series["quantum"] = pd.DataFrame({"t": [0.0, 0.5], "norm": [1.0, 1.0]})
    psi = plane_wave(make_uniform_grid(1, (0.0, 2 * math.pi), 16), 2)
    report.fields["final"] = psi
    paths = emit_report(report, str(tmp_path))
    assert [p.split("/")[-1] for p in paths] == ["demo.csv", "demo_quantum.csv", "demo_final.pfld"]
    assert (tmp_path / "demo_quantum.csv").read_text().splitlines() == ["t,norm", "0.0,1.0", "0.5,1.0"]
    assert np.array_equal(read_field(str(tmp_path / "demo_final.pfld")).values, psi.values)


def test_read_report_restores_types(tmp_path):
    checks = [Check("a", 0.1, 1.0), Check("b", math.inf, 1.0, "grid too small")]
    emit_report(_report(checks=checks), str(tmp_path))
    df, config_hash = read_report(str(tmp_path / "demo.csv"))
    assert config_hash == "abc123"
    assert df["pass"].tolist() == [True, False]
    assert math.isinf(df["value"].iloc[1])
    assert df["reason"].tolist() == ["", "grid too small"]


def test_compare_reports(tmp_path):
    emit_report(_report(), str(tmp_path / "a"))
    emit_report(_report(), str(tmp_path / "b"))
    emit_report(_report(value_a=0.2), str(tmp_path / "c"))
    same = compare_reports(str(tmp_path / "a" / "demo.csv"), str(tmp_path / "b" / "demo.csv"))
    assert same.empty
    diff = compare_reports(str(tmp_path / "a" / "demo.csv"), str(tmp_path / "c" / "demo.csv"))
    assert diff["check"].tolist() == ["a"]
    assert diff["value_b"].iloc[0] == pytest.approx(0.2)
    loose = compare_reports(str(tmp_path / "a" / "demo.csv"), str(tmp_path / "c" / "demo.csv"), rtol=0.9)
    assert loose.empty


def test_compare_flags_missing_rows(tmp_path):
    emit_report(_report(), str(tmp_path / "a"))
    emit_report(_report(checks=[Check("a", 0.1, 1.0)]), str(tmp_path / "b"))
    diff = compare_reports(str(tmp_path / "a" / "demo.csv"), str(tmp_path / "b" / "demo.csv"))
    assert diff["check"].tolist() == ["b"]
    with pytest.raises(FileNotFoundError):
        read_report(str(tmp_path / "missing.csv"))
