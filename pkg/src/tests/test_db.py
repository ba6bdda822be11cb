# src/tests/test_db.py
import math

import pytest
from sqlalchemy import inspect

from src.db import init_db, load_reports, save_report
from src.suites import Check, RunReport


def _report(name, checks):
    return RunReport(name, checks, "f" * 64, wall_time=1.25)


def test_init_db_creates_tables(tmp_path):
    engine = init_db(str(tmp_path / "nested" / "phaseflow.db"))
    assert set(inspect(engine).get_table_names()) == {"runs", "checks"}


def test_save_and_load_reports(tmp_path):
    db_file = str(tmp_path / "phaseflow.db")
    engine = init_db(db_file)
    first = save_report(engine, _report("alpha", [Check("a", 0.5, 1.0), Check("b", math.inf, 1.0, "boom")]))
    second = save_report(engine, _report("beta", [Check("c", 0.0, 0.0)]))
    assert second == first + 1

    rows = load_reports(db_file)
    assert rows["scenario"].tolist() == ["alpha", "alpha", "beta"]
    assert rows["check"].tolist() == ["a", "b", "c"]
    assert [bool(v) for v in rows["passed"]] == [True, False, True]
    assert rows["reason"].tolist() == ["", "boom", ""]
    assert math.isinf(rows["value"].iloc[1])
    assert set(rows["config_hash"]) == {"f" * 64}


def test_load_missing_db(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_reports(str(tmp_path / "absent.db"))
