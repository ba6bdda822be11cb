# src/tests/test_spin.py
import logging
import math

import numpy as np
import pytest

from src.errors import GridError, StateError
from src.grids import make_sphere_grid
from src.spin import (SpinOperator, apply_angular_operator, commutator_table, harmonic_state, hermiticity_residuals,
                      ladder_consistency, ladder_constant, larmor_precession, minus_state, pauli_reconstruct,
                      plus_state, rotor_hamiltonian_expectation, spin_eigencheck)


def test_half_spin_states_are_eigenstates():
    grid = make_sphere_grid(6, 0.5)
    up = spin_eigencheck(plus_state(grid))
    assert up.casimir == pytest.approx(0.75, abs=1e-6)
    assert up.z_component == pytest.approx(0.5, abs=1e-6)
    assert up.casimir_residual < 1e-6 and up.z_residual < 1e-6
    down = spin_eigencheck(minus_state(grid))
    assert down.z_component == pytest.approx(-0.5, abs=1e-6)


def test_spherical_harmonic_eigenvalues():
    grid = make_sphere_grid(8)
    result = spin_eigencheck(harmonic_state(2, 1, grid))
    assert result.casimir == pytest.approx(6.0, abs=1e-6)
    assert result.z_component == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(GridError):
        harmonic_state(1, 0, make_sphere_grid(8, 0.5))
    with pytest.raises(StateError):
        harmonic_state(9, 0, grid)


@pytest.mark.parametrize("l", range(9))
def test_harmonics_up_to_l8_on_the_large_sphere(l):
    grid = make_sphere_grid(16)
    for m in range(-l, l + 1):
        result = spin_eigencheck(harmonic_state(l, m, grid))
        assert result.casimir == pytest.approx(l * (l + 1.0), abs=1e-6)
        assert result.z_component == pytest.approx(float(m), abs=1e-6)
        assert result.casimir_residual < 1e-6
    up = spin_eigencheck(plus_state(make_sphere_grid(16, 0.5)))
    assert up.casimir == pytest.approx(0.75, abs=1e-6)


def test_operator_names_and_aliases():
    assert SpinOperator("L²").kind == "L2sum"
    assert SpinOperator("S−").kind == "S-"
    with pytest.raises(StateError):
        SpinOperator("J3")


def test_raising_operator_maps_down_to_up():
    grid = make_sphere_grid(6, 0.5)
    raised = apply_angular_operator(SpinOperator("S+"), minus_state(grid))
    assert raised.with_values(raised.values - plus_state(grid).values).norm() < 1e-6


def test_pauli_matrices_from_quadrature():
    result = pauli_reconstruct(6)
    assert result.deviation < 1e-8
    assert result.leak < 1e-6
    assert np.allclose(result.sigmas["sigma+"] @ result.sigmas["sigma-"]
                       + result.sigmas["sigma-"] @ result.sigmas["sigma+"], np.eye(2), atol=1e-8)


def test_commutators_close_for_both_families():
    table = commutator_table(8)
    assert list(table.columns) == ["family", "commutator", "residual"]
    assert set(table["family"]) == {"L", "S"}
    assert len(table) == 8
    assert table["residual"].max() < 1e-7


def test_generators_are_hermitian():
    residuals = hermiticity_residuals(8)
    assert set(residuals) == {"L1", "L2", "L3", "S1", "S2", "S3"}
    assert max(residuals.values()) < 1e-8


def test_ladder_relations(caplog):
    assert ladder_consistency(8) < 1e-10
    result = ladder_constant(6)
    assert result.raising == pytest.approx(1.0, abs=1e-6)
    assert result.lowering == pytest.approx(1.0, abs=1e-6)
    with caplog.at_level(logging.WARNING):
        scaled = ladder_constant(6, hbar=2.0)
    assert scaled.raising == pytest.approx(2.0, abs=1e-6)
    assert "ladder relation" in caplog.text


def test_rotor_energy_of_spin_up():
    grid = make_sphere_grid(6, 0.5)
    energy = rotor_hamiltonian_expectation((0.0, 0.0, 0.4), 2.0, plus_state(grid))
    assert energy == pytest.approx(0.75 / 2.0 + 0.4 * 0.5, abs=1e-6)
    with pytest.raises(StateError):
        rotor_hamiltonian_expectation((0.0, 0.0, 0.4), 0.0, plus_state(grid))


def test_larmor_precession_follows_cosine():
    times = np.linspace(0.0, 2 * math.pi, 33)
    result = larmor_precession(1.0, times)
    assert list(result.series.columns) == ["t", "s3", "expected"]
    assert len(result.series) == 33
    assert result.deviation < 1e-6
