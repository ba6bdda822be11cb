# src/tests/test_grids.py
import math

import numpy as np
import pytest

from src.errors import GridError
from src.grids import (ScalarField, SynchronicityField, derivative, integrate_values, make_phase_grid,
                       make_sphere_grid, make_uniform_grid, integrate, map_chunks, momentum_of_synchronicity,
                       sphere_derivative, spectral_derivative, spin_harmonic, worker_count)


def test_node_layout_per_boundary():
    periodic = make_uniform_grid(1, (0.0, 2 * math.pi), 64)
    assert periodic.spacing[0] == pytest.approx(2 * math.pi / 64)
    assert periodic.axis(0)[0] == 0.0

    box = make_uniform_grid(1, (0.0, math.pi), 32, "box-doubled")
    h = math.pi / 32
    assert box.axis(0)[0] == pytest.approx(0.5 * h)
    assert box.axis(0)[-1] == pytest.approx(math.pi - 0.5 * h)

    open_grid = make_uniform_grid(1, (-1.0, 1.0), 33, "open")
    assert open_grid.spacing[0] == pytest.approx(2.0 / 32)
    assert open_grid.axis(0)[-1] == pytest.approx(1.0)


def test_invalid_grids_rejected():
    with pytest.raises(GridError):
        make_uniform_grid(1, (0.0, 1.0), 4)
    with pytest.raises(GridError):
        make_uniform_grid(1, (1.0, 0.0), 16)
    with pytest.raises(GridError):
        make_uniform_grid(1, (0.0, 1.0), 16, "reflecting")
    with pytest.raises(GridError):
        make_uniform_grid(3, (0.0, 1.0), 16)


def test_fft_derivative_of_sine():
    grid = make_uniform_grid(1, (0.0, 2 * math.pi), 64)
    x = grid.axis(0)
    assert np.max(np.abs(derivative(np.sin(3 * x), grid, 0) - 3 * np.cos(3 * x))) < 1e-11


def test_box_odd_field_derivative_flips_parity():
    grid = make_uniform_grid(1, (0.0, math.pi), 32, "box-doubled")
    x = grid.axis(0)
    field = ScalarField(grid, np.sin(2 * x), parity="odd")
    d = spectral_derivative(field)
    assert d.parity == "even"
    assert np.max(np.abs(d.values - 2 * np.cos(2 * x))) < 1e-11


def test_open_grid_fourth_order_stencil_exact_on_cubic():
    grid = make_uniform_grid(1, (-1.0, 1.0), 33, "open")
    x = grid.axis(0)
    assert np.max(np.abs(derivative(x ** 3, grid, 0) - 3 * x ** 2)) < 1e-10


def test_2d_derivative_along_second_axis():
    grid = make_uniform_grid(2, (0.0, 2 * math.pi), 32)
    X = grid.mesh()
    f = np.sin(X[0]) * np.cos(2 * X[1])
    d = derivative(f, grid, 1)
    assert np.max(np.abs(d + 2 * np.sin(X[0]) * np.sin(2 * X[1]))) < 1e-11


def test_phase_grid_is_symmetric_in_momentum():
    x_grid = make_uniform_grid(1, (-4.0, 4.0), 16, "open")
    grid = make_phase_grid(x_grid, (-4.0, 4.0), 20)
    assert grid.shape == (16, 20)
    assert np.mean(grid.p_axes[0]) == pytest.approx(0.0, abs=1e-12)
    X, P = grid.mesh()
    assert X.shape == (1, 16, 20) and P.shape == (1, 16, 20)
    with pytest.raises(GridError):
        make_phase_grid(x_grid, (-3.0, 4.0), 20, p_center=0.0)


def test_plane_wave_phase_gives_constant_momentum():
    grid = make_uniform_grid(1, (0.0, 2 * math.pi), 64)
    x = grid.axis(0)
    eta = SynchronicityField.from_wave_phase(grid, np.exp(3j * x), hbar=0.5)
    p = momentum_of_synchronicity(eta).values[0]
    assert np.max(np.abs(p - 1.5)) < 1e-10


def test_sphere_quadrature_and_harmonics():
    grid = make_sphere_grid(6)
    assert grid.shape == (8, 16)
    assert np.sum(grid.weights) == pytest.approx(4 * math.pi)
    y = spin_harmonic(2, 1, grid)
    assert integrate_values(np.abs(y) ** 2, grid).real == pytest.approx(1.0, abs=1e-12)
    theta, phi = grid.mesh()
    y11 = -math.sqrt(3 / (8 * math.pi)) * np.sin(theta) * np.exp(1j * phi)
    assert np.max(np.abs(spin_harmonic(1, 1, grid) - y11)) < 1e-12


def test_sphere_derivatives_of_harmonics():
    grid = make_sphere_grid(6)
    theta, _ = grid.mesh()
    y32 = spin_harmonic(3, 2, grid)
    assert np.max(np.abs(sphere_derivative(y32, grid, "phi") - 2j * y32)) < 1e-10
    y10 = spin_harmonic(1, 0, grid)
    expected = -math.sqrt(3 / (4 * math.pi)) * np.sin(theta)
    assert np.max(np.abs(sphere_derivative(y10, grid, "theta") - expected)) < 1e-10
    with pytest.raises(GridError):
        sphere_derivative(y10, grid, "chi")


def test_sphere_grid_validation():
    with pytest.raises(GridError):
        make_sphere_grid(1)
    with pytest.raises(GridError):
        make_sphere_grid(6, spin_weight=1.5)


def test_open_grid_uses_trapezoid():
    grid = make_uniform_grid(1, (0.0, 1.0), 11, "open")
    assert integrate_values(np.ones(11), grid) == pytest.approx(1.0)
    assert integrate(ScalarField(grid, np.ones(11))) == pytest.approx(1.0)


def test_map_chunks_keeps_order(monkeypatch):
    items = list(range(10))
    serial = map_chunks(lambda s: list(s), items, chunks=3)
    assert [v for part in serial for v in part] == items
    monkeypatch.setenv("PHASEFLOW_THREADS", "4")
    assert worker_count() == 4
    threaded = map_chunks(lambda s: [v * v for v in s], items)
    assert [v for part in threaded for v in part] == [v * v for v in items]
    monkeypatch.setenv("PHASEFLOW_THREADS", "many")
    assert worker_count() == 1
