# src/tests/test_suites.py
import math

import pytest

from src.scenario import parse_scenario
from src.suites import Check, RunReport, _shortfall, run_checks

QUANTUM = """
[scenario]
name = small-quantum
layer = quantum
checks = unitarity, pure_state, picture
[hamiltonian]
preset = harmonic
[grid]
x_min = -8
x_max = 8
points = {points}
[integrator]
dt = 0.01
t_end = 0.5
segments = 5
[initial]
preset = coherent
x0 = 1
"""

SHORT_CLASSICAL = """
[scenario]
name = one-grid
layer = classical
checks = convergence, brackets
[hamiltonian]
preset = harmonic
[grid]
points = 32
boundary = open
[integrator]
t_end = 0.1
"""


def _config(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return parse_scenario(str(path))


def test_check_passes_only_within_tolerance():
    assert Check("x", 1e-3, 1e-3).passed
    assert not Check("x", math.inf, 1.0).passed
    assert not Check("x", math.nan, 1.0).passed
    assert _shortfall(2.1, 1.8) == 0.0
    assert _shortfall(1.5, 1.8) == pytest.approx(0.3)
    assert _shortfall(math.nan, 1.8) == math.inf


def test_report_frame_and_exit_code():
    report = RunReport("r", [Check("a", 0.0, 1.0), Check("b", 2.0, 1.0, "why")], "h")
    frame = report.to_frame()
    assert list(frame.columns) == ["check", "value", "tolerance", "pass", "reason"]
    assert frame["pass"].tolist() == [True, False]
    assert report.exit_code == 1
    assert RunReport("r", [Check("a", 0.0, 1.0)], "h").exit_code == 0


def test_quantum_evolution_checks(tmp_path):
    report = run_checks(_config(tmp_path, QUANTUM.format(points=64)))
    names = [c.name for c in report.checks]
    assert names == ["unitarity.norm_drift", "unitarity.trace_drift", "pure_state.max_entry_error",
                     "picture.position_gap"]
    assert report.passed
    series = report.series["quantum"]
    assert list(series.columns) == ["t", "norm", "trace", "herm_residual", "picture_gap", "moment_residual"]
    assert len(series) == 6
    assert series["t"].iloc[-1] == pytest.approx(0.5)
    assert report.fields["final"].grid.points == (64,)


def test_large_grid_turns_dense_checks_into_failed_rows(tmp_path):
    report = run_checks(_config(tmp_path, QUANTUM.format(points=512)))
    by_name = {c.name: c for c in report.checks}
    assert by_name["unitarity.norm_drift"].passed
    assert "unitarity.trace_drift" not in by_name
    assert math.isinf(by_name["pure_state"].value)
    assert "256" in by_name["pure_state"].reason
    assert not report.passed


def test_single_resolution_convergence_is_reported(tmp_path):
    report = run_checks(_config(tmp_path, SHORT_CLASSICAL))
    convergence, brackets = report.checks
    assert convergence.name == "convergence"
    assert math.isinf(convergence.value)
    assert "two resolutions" in convergence.reason
    assert brackets.name == "brackets.H_energy"
    assert brackets.passed


def test_central_force_charge_preset():
    report = run_checks(parse_scenario("charge-central"))
    assert [c.name for c in report.checks] == ["charge.ensemble_drift", "brackets.H_L3"]
    assert report.passed


def test_degenerate_run_passes_every_evolution_check():
    report = run_checks(parse_scenario("degenerate"))
    assert all(c.passed and c.reason == "degenerate" for c in report.checks)
    assert report.series == {}


def test_free_transport_converges_faster_than_second_order():
    report = run_checks(parse_scenario("free-convergence"))
    assert report.passed
    table = report.series["convergence"]
    assert table["points"].tolist() == [64, 128, 256]
    errors = table["L1_vs_reference"].tolist()
    orders = [math.log(coarse / fine) / math.log(2.0) for coarse, fine in zip(errors, errors[1:])]
    assert min(orders) >= 1.8


def test_classical_limit_deviation_shrinks_with_hbar():
    report = run_checks(parse_scenario("classical-limit"))
    assert report.passed
    table = report.series["classical_limit"]
    assert table["hbar"].tolist() == [0.25, 0.125, 0.0625]
    deviations = table["deviation"].tolist()
    assert deviations[0] > deviations[1] > deviations[2] > 0
    # observed order >= 0.8 means each halving of hbar shrinks the deviation by 2**0.8
    assert all(big / small >= 2 ** 0.8 for big, small in zip(deviations, deviations[1:]))


def test_spin_suite_preset_at_full_size():
    report = run_checks(parse_scenario("spin-suite"))
    assert report.passed, [c for c in report.checks if not c.passed]
    eigen = report.series["eigen"]
    # |+>, |-> and every Y_l^m with l <= 8
    assert len(eigen) == 2 + 81
    assert eigen["error"].max() <= 1e-6
    assert set(report.fields) == {"plus", "minus"}


def test_courant_violation_becomes_a_failed_row(tmp_path):
    text = SHORT_CLASSICAL.replace("checks = convergence, brackets", "checks = energy") \
                          .replace("t_end = 0.1", "t_end = 1\ndt = 0.5\nsegments = 1")
    report = run_checks(_config(tmp_path, text))
    (energy,) = report.checks
    assert energy.name == "energy"
    assert math.isinf(energy.value)
    assert "CFL" in energy.reason
    assert report.exit_code == 1
