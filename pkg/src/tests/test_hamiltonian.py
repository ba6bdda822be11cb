# src/tests/test_hamiltonian.py
import math

import numpy as np
import pytest

from src.errors import GridError, UnsupportedMetricError
from src.grids import make_phase_grid, make_uniform_grid
from src.hamiltonian import (HamiltonianSpec, angular_momentum_charge, build_hamiltonian, charge_on_phase_grid,
                             energy_charge, eval_hamiltonian, force, hamiltonian_gradients,
                             hamiltonian_on_phase_grid, harmonic, lagrangian_of, pendulum, poisson_bracket,
                             tabulated, vector_potential, velocity)


def _phase_grid(dim=1, n=24, boundary="open"):
    return make_phase_grid(make_uniform_grid(dim, (-3.0, 3.0), n, boundary), (-3.0, 3.0), n,
                           p_boundary="open")


def test_harmonic_energy_and_gradients():
    H = harmonic(omega=2.0)
    assert eval_hamiltonian(H, 1.0, 0.5) == pytest.approx(0.5 * 0.25 + 0.5 * 4.0)
    assert velocity(H, 1.0, 0.5)[0] == pytest.approx(0.5)
    assert force(H, 1.0, 0.5)[0] == pytest.approx(4.0)
    v, f = hamiltonian_gradients(H, 1.0, 0.5)
    assert np.allclose(v, velocity(H, 1.0, 0.5)) and np.allclose(f, force(H, 1.0, 0.5))
    # L = p dH/dp - H
    assert lagrangian_of(H, 1.0, 0.5) == pytest.approx(0.125 - 2.0)


def test_vector_potential_minimal_coupling():
    H = vector_potential(a0=0.3, a1=1.0)
    x, p = 0.7, -0.2
    q = p + 0.3 + math.sin(x)
    assert eval_hamiltonian(H, x, p) == pytest.approx(0.5 * q * q)
    assert velocity(H, x, p)[0] == pytest.approx(q)
    assert force(H, x, p)[0] == pytest.approx(q * math.cos(x))


def test_metric_must_be_positive_definite():
    with pytest.raises(UnsupportedMetricError):
        HamiltonianSpec("bad", 1, np.array([[-1.0]]), lambda x: 0 * x[0], np.zeros_like)
    with pytest.raises(UnsupportedMetricError):
        HamiltonianSpec("bad", 2, np.array([[1.0, 0.2], [0.0, 1.0]]), lambda x: 0 * x[0], np.zeros_like)


def test_canonical_bracket_sign():
    grid = _phase_grid()
    X, P = grid.mesh()
    assert np.allclose(poisson_bracket(P[0], X[0], grid), 1.0)
    assert np.allclose(poisson_bracket(X[0], P[0], grid), -1.0)


def test_bracket_of_hamiltonian_with_itself_vanishes():
    grid = _phase_grid()
    h = hamiltonian_on_phase_grid(pendulum(), grid)
    assert np.max(np.abs(poisson_bracket(h, h, grid))) == 0.0


def test_central_potential_conserves_angular_momentum_on_grid():
    grid = _phase_grid(dim=2, n=12)
    H = build_hamiltonian("central", omega=1.5)
    bracket = poisson_bracket(hamiltonian_on_phase_grid(H, grid),
                              charge_on_phase_grid(angular_momentum_charge(), grid), grid)
    assert np.max(np.abs(bracket)) < 1e-10


def test_energy_charge_reproduces_hamiltonian():
    H = vector_potential(a0=0.5, a1=0.25)
    Q = energy_charge(H)
    x = np.linspace(-1, 1, 7)
    p = np.linspace(2, -2, 7)
    assert np.allclose(Q.evaluate(x, p), eval_hamiltonian(H, x, p))


def test_unknown_preset():
    with pytest.raises(GridError):
        build_hamiltonian("morse")


def test_tabulated_matches_analytic_pendulum():
    grid = make_uniform_grid(1, (-math.pi, math.pi), 64)
    x = grid.axis(0)
    H = tabulated(grid, 1.0 - np.cos(x))
    ref = pendulum(1.0)
    probe = np.array([[0.1, 1.3, -2.9]])
    assert np.allclose(H.U(probe), ref.U(probe), atol=1e-6)
    assert np.allclose(force(H, probe, np.zeros_like(probe)), force(ref, probe, np.zeros_like(probe)), atol=1e-5)
    with pytest.raises(GridError):
        tabulated(make_uniform_grid(1, (0.0, 1.0), 16, "open"), np.zeros(16))
