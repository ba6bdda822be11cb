# src/tests/test_classical.py
import math

import numpy as np
import pytest

from src.classical import (GaussianPacket, LiouvilleSolver, ParticleEnsemble, PhaseSpaceDensity, deposit_ensemble,
                           ensemble_charge_drift, integrate_trajectory, leaf_current_residual,
                           leaf_margin, reconstruct_phase_density, reference_density, slice_into_leaves, stable_dt,
                           step_characteristics, step_lie_poisson_leaf, step_liouville,
                           verify_classical_equivalence)
from src.errors import CFLViolation, GridError, StateError
from src.grids import make_phase_grid, make_uniform_grid
from src.hamiltonian import angular_momentum_charge, central, free, harmonic, vector_potential

PACKET = GaussianPacket(center_x=(1.0,), center_p=(0.0,), width_x=(0.5,), width_p=(0.5,))


def _phase_grid(n=64, extent=5.0, dim=1):
    x_grid = make_uniform_grid(dim, (-extent, extent), n, "open")
    return make_phase_grid(x_grid, (-extent, extent), n, p_boundary="open")


def test_packet_sample_is_normalized():
    rho = PACKET.sample(_phase_grid(32))
    assert rho.mass() == pytest.approx(1.0)
    with pytest.raises(GridError):
        PhaseSpaceDensity(rho.grid, np.zeros((4, 4)))


def test_leapfrog_closes_harmonic_orbit():
    H = harmonic()
    traj = integrate_trajectory(H, 1.0, 0.0, 2 * math.pi / 1000, 1000, record_every=100)
    assert len(traj.times) == 11
    assert abs(traj.positions[-1][0] - 1.0) < 1e-4
    assert abs(traj.momenta[-1][0]) < 1e-4
    assert traj.energy_drift(H) < 1e-4


def test_implicit_scheme_keeps_energy_bounded():
    H = vector_potential(a0=0.2, a1=0.5)
    assert not H.separable
    traj = integrate_trajectory(H, 0.3, 0.4, 0.01, 1000)
    assert traj.energy_drift(H) < 1e-3


def test_characteristics_edge_cases():
    H = harmonic()
    x, p = step_characteristics(H, (np.array([1.0]), np.array([0.5])), 0.0)
    assert x[0] == 1.0 and p[0] == 0.5
    with pytest.raises(StateError):
        step_characteristics(H, (np.array([np.nan]), np.array([0.0])), 0.1)


def test_liouville_cfl_and_identity():
    H = harmonic()
    grid = _phase_grid(32)
    rho = PACKET.sample(grid)
    solver = LiouvilleSolver(H, grid, cfl_limit=0.9)
    assert solver.stable_dt() == pytest.approx(stable_dt(H, grid, 0.9))
    assert solver(rho, 0.0) is rho
    assert step_liouville(H, rho, 0.0) is rho
    with pytest.raises(CFLViolation):
        solver(rho, 2.0 * solver.stable_dt())


def test_liouville_tracks_exact_rotation():
    H = harmonic()
    grid = _phase_grid(64)
    T = 0.5 * math.pi
    rho = LiouvilleSolver(H, grid).evolve(PACKET.sample(grid), T)
    assert rho.mass() == pytest.approx(1.0, abs=1e-10)
    assert rho.l1_distance(reference_density(PACKET, H, grid, T)) < 5e-3


def test_ensemble_deposit_conserves_mass():
    grid = _phase_grid(64)
    rho = PACKET.sample(grid)
    ens = ParticleEnsemble.from_density(rho)
    rebuilt = deposit_ensemble(ens.x, ens.p, ens.weights, grid)
    assert rebuilt.mass() == pytest.approx(1.0, abs=1e-10)
    assert rebuilt.l1_distance(rho) < 0.2


def test_central_force_keeps_angular_momentum():
    grid = _phase_grid(8, extent=3.0, dim=2)
    packet = GaussianPacket((1.0, 0.0), (0.0, 1.0), (0.7, 0.7), (0.7, 0.7))
    ens = ParticleEnsemble.from_density(packet.sample(grid))
    assert ensemble_charge_drift(central(), angular_momentum_charge(), ens, 1.0, 0.05) < 1e-12


def test_slicing_then_reconstructing_is_identity():
    grid = _phase_grid(32)
    rho = PACKET.sample(grid)
    leaves = slice_into_leaves(rho)
    assert len(leaves) == 32
    rebuilt = reconstruct_phase_density(leaves, grid)
    assert rebuilt.l1_distance(rho) < 1e-10
    assert rebuilt.renormalization == pytest.approx(1.0)


def test_margin_leaves_are_empty_and_reconstruction_ignores_them():
    grid = _phase_grid(32)
    rho = PACKET.sample(grid)
    leaves = slice_into_leaves(rho, margin=3)
    assert len(leaves) == 38
    assert leaves[0].label[0] == pytest.approx(grid.p_axes[0][0] - 3 * grid.p_spacing[0])
    assert not np.any(leaves[0].density) and not np.any(leaves[-1].density)
    assert reconstruct_phase_density(leaves, grid).l1_distance(rho) < 1e-10


def test_leaf_margin_follows_the_largest_force():
    grid = _phase_grid(64, extent=4.0)
    # |force| <= 4 on x in [-4, 4]; 4 * (pi / 4) / 0.125 = 25.1
    assert leaf_margin(harmonic(), grid, math.pi / 4) == (26,)
    assert leaf_margin(free(), grid, 1.0) == (0,)


def test_leaves_keep_momentum_coverage_over_a_full_period():
    grid = _phase_grid(64, extent=4.0)
    report = verify_classical_equivalence(harmonic(), PACKET, 2 * math.pi, resolutions=[grid],
                                          methods=("leaves",), segments=8)
    assert report.relabel_count == 7
    assert report.min_sigma > 1e-3
    assert report.reference_distances["leaves"] < 0.1
    assert report.results["leaves"].mass() == pytest.approx(1.0, abs=2e-2)


def test_leaf_current_matches_momentum_form():
    grid = _phase_grid(64)
    leaf = slice_into_leaves(PACKET.sample(grid))[40]
    H = harmonic()
    assert leaf_current_residual(H, leaf) < 1e-9
    assert step_lie_poisson_leaf(H, leaf, 0.0) is leaf
    moved = step_lie_poisson_leaf(H, leaf, 0.01)
    assert moved.time == pytest.approx(0.01)
    # horizontal leaf under U = x^2/2: pbar(x, t) = k - x t + k t^2 / 2 + O(t^3)
    assert np.allclose(moved.momentum[0], leaf.momentum[0] - 0.01 * grid.x.axis(0) + 0.5e-4 * leaf.label[0],
                       atol=1e-5)


def test_degenerate_equivalence_run():
    report = verify_classical_equivalence(harmonic(), PACKET, 0.0, resolutions=[_phase_grid(32)])
    assert report.degenerate
    assert all(v == 0.0 for v in report.distances.values())
    assert set(report.distances) == {"liouville_vs_characteristics", "liouville_vs_leaves",
                                     "characteristics_vs_leaves"}


@pytest.mark.slow
def test_three_schemes_agree_over_one_period():
    x_grid = make_uniform_grid(1, (-4.0, 4.0), 256, "open")
    grid = make_phase_grid(x_grid, (-4.0, 4.0), 256, p_boundary="open")
    report = verify_classical_equivalence(harmonic(), PACKET, 2 * math.pi, resolutions=[grid])
    for pair, distance in report.distances.items():
        assert distance <= 5e-3, pair
    assert report.reference_distances["liouville_vs_initial"] <= 5e-3
    assert list(report.series.columns) == ["t", "mass", "energy_mean", "L1_vs_reference", "min_sigma"]
