# src/tests/test_quantum.py
import math

import numpy as np
import pytest

from src.errors import BandwidthError, GridError, PictureMismatchError, StateError
from src.grids import make_uniform_grid
from src.hamiltonian import box, energy_charge, free, harmonic, pendulum
from src.quantum import (DensityMatrix, FourierDensity, OperatorRep, SplitStepPropagator, WaveFunction,
                         box_eigenstates, build_observable, charge_drift, charge_expectation, coherent_state,
                         continuity_residual, density_from_fourier, evolve_wavefunction, fourier_from_density,
                         hamiltonian_matrix, heisenberg_expectation, madelung_fields, modulated_phase_state,
                         momentum_power, periodic_gaussian, picture_gap, plane_wave, position_operator,
                         random_low_band_state, step_quantum_liouville, step_schrodinger,
                         verify_moment_equations, wall_values)


def _periodic(n=64, lo=-8.0, hi=8.0):
    return make_uniform_grid(1, (lo, hi), n)


def test_quantum_layer_rejects_open_grids():
    grid = make_uniform_grid(1, (-1.0, 1.0), 16, "open")
    with pytest.raises(GridError):
        SplitStepPropagator(free(), grid, 1.0, 0.01)
    with pytest.raises(StateError):
        WaveFunction(_periodic(), np.zeros(64)).normalized()


def test_split_step_is_unitary():
    grid = _periodic(128)
    psi = coherent_state(grid, 1.0, 0.5)
    prop = SplitStepPropagator(harmonic(), grid, 1.0, 0.01)
    for _ in range(200):
        psi = prop(psi)
    assert abs(psi.norm() - 1.0) < 1e-12
    with pytest.raises(StateError):
        step_schrodinger(harmonic(), WaveFunction(grid, 2.0 * psi.values), 0.01)


def test_pure_state_stays_pure_under_liouville_step():
    grid = _periodic()
    psi = coherent_state(grid, 1.0, 0.0)
    rho = psi.projector()
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    H = harmonic()
    for _ in range(10):
        rho = step_quantum_liouville(H, rho, 0.05)
        psi = step_schrodinger(H, psi, 0.05)
    assert rho.distance(psi.projector()) < 1e-12
    assert abs(rho.trace() - 1.0) < 1e-12


def test_density_matrix_validation():
    grid = _periodic()
    a = plane_wave(grid, 1)
    b = plane_wave(grid, -1)
    with pytest.raises(StateError):
        DensityMatrix.from_spectrum([1.5, -0.5], [a, b])
    signed = DensityMatrix.from_spectrum([1.5, -0.5], [a, b], signed_weights=True)
    signed.check_positive()
    with pytest.raises(StateError):
        DensityMatrix(grid, signed.matrix).check_positive()
    with pytest.raises(GridError):
        DensityMatrix(_periodic(512), np.eye(1))


def test_fourier_table_bandwidth_and_entries():
    grid = make_uniform_grid(1, (0.0, 2 * math.pi), 16)
    with pytest.raises(BandwidthError):
        FourierDensity.from_entries(grid, {(8, 0): 1.0})
    rho = density_from_fourier(FourierDensity.from_entries(grid, {(2, 2): 0.5, (-1, -1): 0.5}))
    assert rho.trace() == pytest.approx(1.0)
    table = fourier_from_density(rho)
    assert table.entry(2, 2) == pytest.approx(0.5)
    assert abs(table.entry(2, -1)) < 1e-12


def test_heisenberg_and_schrodinger_pictures_agree():
    grid = _periodic()
    psi = coherent_state(grid, 1.0, 0.0)
    x_op = position_operator(grid)
    heis, schr = picture_gap(harmonic(), x_op, psi, 0.5, dt=0.01)
    assert abs(heis - schr) < 1e-10
    assert heisenberg_expectation(harmonic(), x_op, psi, 0.5, dt=0.01) == pytest.approx(math.cos(0.5), abs=1e-3)
    with pytest.raises(PictureMismatchError):
        heisenberg_expectation(harmonic(), x_op, psi, 0.5, dt=0.01, tolerance=-1.0)


def test_observables_are_hermitian_and_checked():
    grid = _periodic()
    op = build_observable([(1, lambda X: np.cos(X[0])), (2, 0.25)], grid)
    assert op.residual() < 1e-12
    with pytest.raises(StateError):
        build_observable([(5, 1.0)], grid)
    with pytest.raises(GridError):
        momentum_power(make_uniform_grid(1, (0.0, 1.0), 16, "box-doubled"), order=1)


def test_moment_residual_is_second_order_in_dt():
    grid = make_uniform_grid(1, (-math.pi, math.pi), 64)
    rho = random_low_band_state(grid, band=4, seed=3).projector()
    H = pendulum()
    coarse = verify_moment_equations(H, rho, 0.02).residual
    fine = verify_moment_equations(H, rho, 0.01).residual
    assert 3.5 < coarse / fine < 4.5


def test_madelung_momentum_of_modulated_phase():
    grid = make_uniform_grid(1, (0.0, 2 * math.pi), 64)
    psi, momentum = modulated_phase_state(grid, mode=2, amplitude=0.3)
    fields = madelung_fields(psi)
    assert fields.masked == 0
    assert np.max(np.abs(fields.momentum.values[0] - momentum)) < 1e-8
    assert np.allclose(fields.density.values, 1.0 / (2 * math.pi))


def test_free_packet_satisfies_continuity():
    grid = make_uniform_grid(1, (-4 * math.pi, 4 * math.pi), 256)
    psi = periodic_gaussian(grid, 0.0, 1.0)
    assert continuity_residual(free(), psi, 1e-3) < 1e-5


def test_box_states_vanish_at_walls_and_are_stationary():
    grid = make_uniform_grid(1, (0.0, math.pi), 64, "box-doubled")
    states = box_eigenstates(grid, 3)
    kinetic = OperatorRep(hamiltonian_matrix(box(), grid))
    for n, psi in enumerate(states, start=1):
        assert psi.norm() == pytest.approx(1.0)
        assert np.max(np.abs(wall_values(psi))) < 1e-12
        assert kinetic.expectation(psi) == pytest.approx(0.5 * n * n, rel=1e-10)
    later = evolve_wavefunction(box(), states[0], 1.0, dt=0.01)
    assert np.max(np.abs(later.density() - states[0].density())) < 1e-10
    with pytest.raises(BandwidthError):
        box_eigenstates(grid, 64)


def test_plane_wave_energy_charge_is_constant():
    grid = make_uniform_grid(1, (0.0, 2 * math.pi), 32)
    psi = plane_wave(grid, 3)
    Q = energy_charge(free())
    assert charge_expectation(Q, psi) == pytest.approx(4.5)
    assert charge_drift(free(), Q, psi, 1.0, dt=0.05) < 1e-12
