"""
Classical layer.

Three evolution schemes for a phase-space density, all driven by the same
HamiltonianSpec:

- grid Liouville transport (``LiouvilleSolver``): conservative flux form of
  ``d rho/dt = {rho, H}``, FFT derivatives along every phase axis, RK4 in time;
- canonical characteristics (``step_characteristics``): symplectic leapfrog,
  explicit for separable H and implicit (generalized Stormer-Verlet) otherwise;
- Lie-Poisson leaf transport (``step_lie_poisson_leaf``): each leaf of a
  Lagrange foliation carries a momentum field, a density and the Jacobian
  ``sigma = det(d pbar / d k)``; ``reconstruct_phase_density`` pushes the leaves
  back onto the phase grid.

``verify_classical_equivalence`` runs all three side by side.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator, griddata

from src.grids import ConfigGrid, PhaseGrid, axis_derivative, derivative, map_chunks
from src.errors import CausticError, CFLViolation, CoverageError, GridError, StateError
from src.hamiltonian import (ChargeSpec, HamiltonianSpec, as_points, eval_hamiltonian, force,
                             hamiltonian_on_phase_grid, lagrangian_of, velocity)

logger = logging.getLogger(__name__)

METHODS = ("liouville", "characteristics", "leaves")
KERNEL_REACH = 6


# ---------------------------------------------------------------------------
# densities and initial states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseSpaceDensity:
    grid: PhaseGrid
    values: np.ndarray
    renormalization: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"density shape {values.shape} does not match phase grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def l1_distance(self, other: "PhaseSpaceDensity") -> float:
        if other.grid != self.grid:
            raise GridError("densities live on different phase grids")
        return float(np.sum(np.abs(self.values - other.values)) * self.grid.cell_volume)

    def normalized(self) -> "PhaseSpaceDensity":
        return PhaseSpaceDensity(self.grid, self.values / self.mass())


@dataclass(frozen=True)
class GaussianPacket:
    """Product Gaussian in (x, p); widths are standard deviations."""
    center_x: tuple[float, ...]
    center_p: tuple[float, ...]
    width_x: tuple[float, ...]
    width_p: tuple[float, ...]

    def _wrapped(self, x: np.ndarray, grid: PhaseGrid | None) -> np.ndarray:
        if grid is None or grid.x.boundary != "periodic":
            return x
        out = np.empty_like(x)
        for a in range(x.shape[0]):
            L = grid.x.lengths[a]
            c = self.center_x[a]
            out[a] = c + np.mod(x[a] - c + 0.5 * L, L) - 0.5 * L
        return out

    def evaluate(self, x, p, grid: PhaseGrid | None = None) -> np.ndarray:
        dim = len(self.center_x)
        x = self._wrapped(as_points(x, dim), grid)
        p = as_points(p, dim)
        out = np.ones(x.shape[1:])
        for a in range(dim):
            out = out * np.exp(-0.5 * ((x[a] - self.center_x[a]) / self.width_x[a]) ** 2)
            out = out * np.exp(-0.5 * ((p[a] - self.center_p[a]) / self.width_p[a]) ** 2)
            out = out / (2.0 * np.pi * self.width_x[a] * self.width_p[a])
        return out

    def sample(self, grid: PhaseGrid) -> PhaseSpaceDensity:
        X, P = grid.mesh()
        return PhaseSpaceDensity(grid, self.evaluate(X, P, grid)).normalized()


def reference_density(packet: GaussianPacket, H: HamiltonianSpec, grid: PhaseGrid, t: float) -> PhaseSpaceDensity:
    """Exact transport ``rho_t = rho_0 o Phi_{-t}`` for presets with a closed-form flow."""
    if H.exact_flow is None:
        raise StateError(f"hamiltonian '{H.name}' has no closed-form flow")
    X, P = grid.mesh()
    X0, P0 = H.exact_flow(X, P, -t)
    return PhaseSpaceDensity(grid, packet.evaluate(X0, P0, grid)).normalized()


# ---------------------------------------------------------------------------
# grid Liouville transport
# ---------------------------------------------------------------------------

class LiouvilleSolver:
    """RK4 stepping of ``-div_x(rho dH/dp) + div_p(rho dH/dx)`` with FFT derivatives.

    The density must vanish towards the phase-box edges: every axis is treated
    as periodic with period ``N * spacing``.
    """

    def __init__(self, H: HamiltonianSpec, grid: PhaseGrid, cfl_limit: float = 0.9):
        self.H = H
        self.grid = grid
        self.cfl_limit = cfl_limit
        X, P = grid.mesh()
        self.flow_x = velocity(H, X, P)
        self.flow_p = -force(H, X, P)
        d = grid.dim
        steps = grid.spacings
        self.rate = float(sum(np.max(np.abs(self.flow_x[j])) / steps[j]
                              + np.max(np.abs(self.flow_p[j])) / steps[d + j] for j in range(d)))

    def courant(self, dt: float) -> float:
        return abs(dt) * self.rate

    def stable_dt(self) -> float:
        return math.inf if self.rate == 0 else self.cfl_limit / self.rate

    def rhs(self, values: np.ndarray) -> np.ndarray:
        d = self.grid.dim
        steps = self.grid.spacings
        out = np.zeros_like(values)
        for j in range(d):
            out -= axis_derivative(values * self.flow_x[j], steps[j], j, "periodic")
            out -= axis_derivative(values * self.flow_p[j], steps[d + j], d + j, "periodic")
        return out

    def __call__(self, rho: PhaseSpaceDensity, dt: float) -> PhaseSpaceDensity:
        if dt == 0:
            return rho
        courant = self.courant(dt)
        if courant > self.cfl_limit:
            raise CFLViolation(courant, self.cfl_limit)
        y = rho.values
        k1 = self.rhs(y)
        k2 = self.rhs(y + 0.5 * dt * k1)
        k3 = self.rhs(y + 0.5 * dt * k2)
        k4 = self.rhs(y + dt * k3)
        return PhaseSpaceDensity(self.grid, y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))

    def evolve(self, rho: PhaseSpaceDensity, T: float, dt: float | None = None) -> PhaseSpaceDensity:
        steps, step = _schedule(T, dt if dt is not None else self.stable_dt())
        for _ in range(steps):
            rho = self(rho, step)
        return rho


def _schedule(T: float, dt: float) -> tuple[int, float]:
    if T == 0 or dt == 0:
        return 0, 0.0
    steps = max(1, math.ceil(abs(T) / abs(dt) - 1e-9))
    return steps, T / steps


def step_liouville(H: HamiltonianSpec, rho: PhaseSpaceDensity, dt: float, cfl_limit: float = 0.9) -> PhaseSpaceDensity:
    return LiouvilleSolver(H, rho.grid, cfl_limit)(rho, dt)


def stable_dt(H: HamiltonianSpec, grid: PhaseGrid, cfl: float = 0.9) -> float:
    return LiouvilleSolver(H, grid, cfl).stable_dt()


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)
    momenta: list[np.ndarray] = field(default_factory=list)

    def append(self, t: float, x: np.ndarray, p: np.ndarray) -> None:
        self.times.append(t)
        self.positions.append(np.array(x, copy=True))
        self.momenta.append(np.array(p, copy=True))

    def energies(self, H: HamiltonianSpec) -> np.ndarray:
        return np.array([eval_hamiltonian(H, x, p) for x, p in zip(self.positions, self.momenta)])

    def energy_drift(self, H: HamiltonianSpec) -> float:
        e = self.energies(H)
        return float(np.max(np.abs(e - e[0])))


def _fixed_point(update, start: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    current = start
    for _ in range(max_iter):
        new = update(current)
        if np.max(np.abs(new - current)) <= tol * (1.0 + np.max(np.abs(new))):
            return new
        current = new
    logger.debug("implicit leapfrog did not converge in %d iterations", max_iter)
    return current


def step_characteristics(H: HamiltonianSpec, state, dt: float, tol: float = 1e-14,
                         max_iter: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """One second-order symplectic step of ``dx/dt = dH/dp``, ``dp/dt = -dH/dx``."""
    x, p = state
    x, p = as_points(x, H.dim), as_points(p, H.dim)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise StateError("non-finite phase-space state")
    if not math.isfinite(dt):
        raise StateError(f"non-finite dt {dt}")
    if dt == 0:
        return x.copy(), p.copy()
    half = 0.5 * dt
    if H.separable:
        p_half = p - half * force(H, x, p)
        x_new = x + dt * velocity(H, x, p_half)
        return x_new, p_half - half * force(H, x_new, p_half)
    p_half = _fixed_point(lambda q: p - half * force(H, x, q), p, tol, max_iter)
    v0 = velocity(H, x, p_half)
    x_new = _fixed_point(lambda y: x + half * (v0 + velocity(H, y, p_half)), x + dt * v0, tol, max_iter)
    return x_new, p_half - half * force(H, x_new, p_half)


def integrate_trajectory(H: HamiltonianSpec, x0, p0, dt: float, steps: int, record_every: int = 1) -> Trajectory:
    x, p = as_points(x0, H.dim), as_points(p0, H.dim)
    traj = Trajectory()
    traj.append(0.0, x, p)
    for n in range(1, steps + 1):
        x, p = step_characteristics(H, (x, p), dt)
        if n % record_every == 0 or n == steps:
            traj.append(n * dt, x, p)
    return traj


@dataclass(eq=False)
class ParticleEnsemble:
    """Weighted characteristics seeded at the phase-grid nodes."""
    x: np.ndarray
    p: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_density(cls, rho: PhaseSpaceDensity) -> "ParticleEnsemble":
        X, P = rho.grid.mesh()
        w = rho.values * rho.grid.cell_volume
        keep = w.ravel() != 0
        d = rho.grid.dim
        return cls(X.reshape(d, -1)[:, keep], P.reshape(d, -1)[:, keep], w.ravel()[keep])

    def advance(self, H: HamiltonianSpec, T: float, dt: float) -> "ParticleEnsemble":
        steps, step = _schedule(T, dt)
        x, p = self.x, self.p
        for _ in range(steps):
            x, p = step_characteristics(H, (x, p), step)
        return ParticleEnsemble(x, p, self.weights)

    def mean(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values) / np.sum(self.weights))


def _axis_kernel(coord: np.ndarray, nodes: np.ndarray, spacing: float, periodic: bool,
                 width: float) -> tuple[np.ndarray, np.ndarray]:
    n = nodes.size
    u = (coord - nodes[0]) / spacing
    offsets = np.arange(-KERNEL_REACH, KERNEL_REACH + 1)
    idx = np.floor(u + 0.5).astype(np.int64)[:, None] + offsets[None, :]
    wt = np.exp(-0.5 * ((idx - u[:, None]) / width) ** 2)
    if periodic:
        idx = np.mod(idx, n)
    else:
        outside = (idx < 0) | (idx >= n)
        wt[outside] = 0.0
        idx[outside] = 0
    total = wt.sum(axis=1, keepdims=True)
    lost = total[:, 0] == 0
    if np.any(lost):
        logger.warning("%d particles left the phase box and were dropped", int(lost.sum()))
        total[lost] = 1.0
    return idx, wt / total


def deposit_ensemble(x: np.ndarray, p: np.ndarray, weights: np.ndarray, grid: PhaseGrid,
                     width_cells: float = 1.0, chunk: int = 4096) -> PhaseSpaceDensity:
    """Gaussian kernel deposition (one cell wide, truncated at six cells)."""
    d = grid.dim
    coords = np.concatenate([as_points(x, d), as_points(p, d)]).reshape(2 * d, -1)
    weights = np.asarray(weights, dtype=float).ravel()
    nodes = list(grid.x.axes) + list(grid.p_axes)
    periodic = [grid.x.boundary == "periodic"] * d + [False] * d
    shape = grid.shape
    flat = np.zeros(int(np.prod(shape)))
    for start in range(0, weights.size, chunk):
        sl = slice(start, start + chunk)
        m = weights[sl].size
        comb_idx = np.zeros((m, 1), dtype=np.int64)
        comb_w = weights[sl][:, None]
        for a in range(2 * d):
            idx, wt = _axis_kernel(coords[a, sl], nodes[a], grid.spacings[a], periodic[a], width_cells)
            comb_idx = (comb_idx[:, :, None] * shape[a] + idx[:, None, :]).reshape(m, -1)
            comb_w = (comb_w[:, :, None] * wt[:, None, :]).reshape(m, -1)
        flat += np.bincount(comb_idx.ravel(), weights=comb_w.ravel(), minlength=flat.size)
    return PhaseSpaceDensity(grid, flat.reshape(shape) / grid.cell_volume)


def ensemble_charge_drift(H: HamiltonianSpec, Q: ChargeSpec, ensemble: ParticleEnsemble,
                          T: float, dt: float) -> float:
    """Largest change of the ensemble mean of ``Q`` per unit time."""
    steps, step = _schedule(T, dt)
    x, p = ensemble.x, ensemble.p
    q0 = ensemble.mean(Q.evaluate(x, p))
    worst = 0.0
    for _ in range(steps):
        x, p = step_characteristics(H, (x, p), step)
        worst = max(worst, abs(ensemble.mean(Q.evaluate(x, p)) - q0))
    return worst / abs(T) if T else 0.0


# ---------------------------------------------------------------------------
# Lie-Poisson leaf transport
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoliationLeaf:
    grid: ConfigGrid
    label: np.ndarray
    momentum: np.ndarray
    density: np.ndarray
    jacobian: np.ndarray
    time: float = 0.0
    volume_density: float = 1.0

    def __post_init__(self):
        shape = self.grid.shape
        object.__setattr__(self, "label", np.atleast_1d(np.asarray(self.label, dtype=float)))
        momentum = np.asarray(self.momentum, dtype=float)
        if momentum.shape == shape and self.grid.dim == 1:
            momentum = momentum[None]
        if momentum.shape != (self.grid.dim,) + shape:
            raise GridError(f"leaf momentum shape {momentum.shape} does not match grid")
        object.__setattr__(self, "momentum", momentum)
        for name in ("density", "jacobian"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape).copy()
            object.__setattr__(self, name, arr)

    def phase_density(self) -> np.ndarray:
        """``rho^{T*M}(x, pbar(x)) = rhobar * sqrt(g) / sigma``."""
        return self.density * self.volume_density / self.jacobian


@dataclass(frozen=True, eq=False)
class EmergenceMomentum:
    current: np.ndarray
    density: np.ndarray

    @classmethod
    def from_leaf(cls, leaf: FoliationLeaf) -> "EmergenceMomentum":
        return cls(leaf.density[None] * leaf.momentum, leaf.density)


def _leaf_rhs(H: HamiltonianSpec, grid: ConfigGrid, X: np.ndarray, P: np.ndarray,
              R: np.ndarray, S: np.ndarray):
    # P: (dim, B, *shape); R, S: (B, *shape); X broadcasts as (dim, 1, *shape)
    v = velocity(H, X, P)
    dP = -force(H, X, P)
    dR = np.zeros_like(R)
    dS = np.zeros_like(S)
    for j in range(grid.dim):
        dP = dP - v[j] * derivative(P, grid, j)
        dR -= derivative(v[j] * R, grid, j)
        dS -= derivative(v[j] * S, grid, j)
    return dP, dR, dS


def _rk4_leaves(H, grid, X, P, R, S, dt):
    k1 = _leaf_rhs(H, grid, X, P, R, S)
    k2 = _leaf_rhs(H, grid, X, P + 0.5 * dt * k1[0], R + 0.5 * dt * k1[1], S + 0.5 * dt * k1[2])
    k3 = _leaf_rhs(H, grid, X, P + 0.5 * dt * k2[0], R + 0.5 * dt * k2[1], S + 0.5 * dt * k2[2])
    k4 = _leaf_rhs(H, grid, X, P + dt * k3[0], R + dt * k3[1], S + dt * k3[2])
    return tuple(y + dt / 6.0 * (a + 2.0 * b + 2.0 * c + e)
                 for y, a, b, c, e in zip((P, R, S), k1, k2, k3, k4))


def _leaf_points(grid: ConfigGrid) -> np.ndarray:
    return grid.mesh()[:, None]


def _stack(leaves: Sequence[FoliationLeaf]):
    P = np.stack([leaf.momentum for leaf in leaves], axis=1)
    R = np.stack([leaf.density for leaf in leaves])
    S = np.stack([leaf.jacobian for leaf in leaves])
    return P, R, S


def _unstack(leaves, P, R, S, time):
    return [FoliationLeaf(leaf.grid, leaf.label, P[:, i], R[i], S[i], time, leaf.volume_density)
            for i, leaf in enumerate(leaves)]


def _check_sigma(S: np.ndarray, floor: float, time: float) -> float:
    low = float(np.min(S))
    if not np.isfinite(low) or low <= floor:
        raise CausticError(time, low, floor)
    return low


def step_lie_poisson_leaf(H: HamiltonianSpec, leaf: FoliationLeaf, dt: float,
                          sigma_floor: float = 1e-3) -> FoliationLeaf:
    """One RK4 step of the leaf momentum, density and Jacobian."""
    if dt == 0:
        return leaf
    P, R, S = _stack([leaf])
    P, R, S = _rk4_leaves(H, leaf.grid, _leaf_points(leaf.grid), P, R, S, dt)
    _check_sigma(S, sigma_floor, leaf.time + dt)
    return _unstack([leaf], P, R, S, leaf.time + dt)[0]


def leaf_velocity(H: HamiltonianSpec, leaf: FoliationLeaf) -> np.ndarray:
    return velocity(H, leaf.grid.mesh(), leaf.momentum)


def leaf_momentum_rhs(H: HamiltonianSpec, leaf: FoliationLeaf) -> np.ndarray:
    """Momentum form: ``d(rho p_k)/dt = -d_j(v_j rho p_k) - rho p_j d_k v_j + rho d_k L^H``."""
    grid = leaf.grid
    X = grid.mesh()
    v = velocity(H, X, leaf.momentum)
    J = leaf.density[None] * leaf.momentum
    LH = lagrangian_of(H, X, leaf.momentum)
    out = np.zeros_like(J)
    for k in range(grid.dim):
        for j in range(grid.dim):
            out[k] -= derivative(v[j] * J[k], grid, j)
            out[k] -= leaf.density * leaf.momentum[j] * derivative(v[j], grid, k)
        out[k] += leaf.density * derivative(LH, grid, k)
    return out


def leaf_current_residual(H: HamiltonianSpec, leaf: FoliationLeaf) -> float:
    """Gap between the momentum-form current and ``pbar d rho/dt + rho d pbar/dt``."""
    P, R, S = _stack([leaf])
    dP, dR, _ = _leaf_rhs(H, leaf.grid, _leaf_points(leaf.grid), P, R, S)
    direct = leaf.momentum * dR[0][None] + leaf.density[None] * dP[:, 0]
    return float(np.max(np.abs(leaf_momentum_rhs(H, leaf) - direct)))


def advance_leaves(H: HamiltonianSpec, leaves: Sequence[FoliationLeaf], T: float,
                   dt_max: float | None = None, cfl: float = 0.9,
                   sigma_floor: float = 1e-3) -> tuple[list[FoliationLeaf], float]:
    """Advance every leaf by ``T``; returns the leaves and the smallest Jacobian seen.

    Steps are shared by all leaves (largest leaf velocity sets the CFL step), so
    the result does not depend on how the leaves are split across workers.
    """
    leaves = list(leaves)
    if not leaves or T == 0:
        return leaves, float(min(np.min(leaf.jacobian) for leaf in leaves)) if leaves else math.inf
    grid = leaves[0].grid
    X = _leaf_points(grid)
    P, R, S = _stack(leaves)
    t0 = leaves[0].time
    elapsed = 0.0
    min_sigma = float(np.min(S))
    h = min(grid.spacing)
    indices = np.arange(len(leaves))
    while elapsed < T * (1.0 - 1e-12):
        vmax = float(np.max(np.abs(velocity(H, X, P))))
        step = T - elapsed
        if vmax > 0:
            step = min(step, cfl * h / vmax)
        if dt_max:
            step = min(step, dt_max)

        def run(chunk, step=step):
            return _rk4_leaves(H, grid, X, P[:, chunk], R[chunk], S[chunk], step)

        parts = map_chunks(run, indices)
        P = np.concatenate([part[0] for part in parts], axis=1)
        R = np.concatenate([part[1] for part in parts])
        S = np.concatenate([part[2] for part in parts])
        elapsed += step
        min_sigma = min(min_sigma, _check_sigma(S, sigma_floor, t0 + elapsed))
    return _unstack(leaves, P, R, S, t0 + T), min_sigma


def slice_into_leaves(rho: PhaseSpaceDensity, time: float = 0.0,
                      margin: int | Sequence[int] = 0) -> list[FoliationLeaf]:
    """Horizontal foliation ``pbar[k](x) = k`` with the leaf labels on the momentum nodes.

    ``margin`` adds that many empty leaves past each end of every momentum axis.
    """
    grid = rho.grid
    d = grid.dim
    x_shape = grid.x.shape
    pads = (int(margin),) * d if np.isscalar(margin) else tuple(int(m) for m in margin)
    axes = [grid.p_center[a] + (np.arange(-m, n + m, dtype=float) - 0.5 * (n - 1)) * grid.p_spacing[a]
            for a, (n, m) in enumerate(zip(grid.p_points, pads))]
    values = np.pad(rho.values, [(0, 0)] * d + [(m, m) for m in pads])
    labels = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T
    flat = values.reshape(x_shape + (-1,))
    ones = np.ones(x_shape)
    return [FoliationLeaf(grid.x, k, k.reshape((d,) + (1,) * d) * np.ones((d,) + x_shape),
                          flat[..., i], ones, time)
            for i, k in enumerate(labels)]


def leaf_margin(H: HamiltonianSpec, grid: PhaseGrid, tau: float) -> tuple[int, ...]:
    """Empty leaves needed per momentum end so the foliation still spans the p-range after ``tau``."""
    X = grid.x.mesh()
    push = np.abs(force(H, X, np.zeros_like(X))) * abs(tau)
    return tuple(int(math.ceil(float(np.max(push[a])) / dp)) for a, dp in enumerate(grid.p_spacing))


def _label_cell(leaves: Sequence[FoliationLeaf]) -> float:
    labels = np.stack([leaf.label for leaf in leaves])
    cell = 1.0
    for a in range(labels.shape[1]):
        distinct = np.unique(labels[:, a])
        if distinct.size > 1:
            cell *= float(np.min(np.diff(distinct)))
    return cell


def reconstruct_phase_density(leaves: Sequence[FoliationLeaf], grid: PhaseGrid,
                              sigma_floor: float = 1e-3, coverage_tol: float = 1e-8) -> PhaseSpaceDensity:
    """Push leaf densities back onto the phase grid (monotone cubic along p, per x column)."""
    leaves = sorted(leaves, key=lambda leaf: tuple(leaf.label[::-1]))
    P, R, S = _stack(leaves)
    time = leaves[0].time
    _check_sigma(S, sigma_floor, time)
    phase_rho = R * leaves[0].volume_density / S
    dk = _label_cell(leaves)
    d = grid.dim
    if d == 1:
        values, covered_mass = _reconstruct_1d(P[0], phase_rho, R, S, dk, grid, sigma_floor, coverage_tol, time)
    else:
        values, covered_mass = _reconstruct_2d(P, phase_rho, R, dk, grid)
    raw = float(np.sum(values) * grid.cell_volume)
    factor = covered_mass / raw if raw > 0 else 1.0
    logger.debug("reconstruction at t=%.4f renormalized by %.12f", time, factor)
    return PhaseSpaceDensity(grid, values * factor, renormalization=factor)


def _reconstruct_1d(P, phase_rho, R, S, dk, grid, sigma_floor, coverage_tol, time):
    p_nodes = grid.p_axes[0]
    nx = grid.x.points[0]
    values = np.zeros((nx, p_nodes.size))
    peak = float(np.max(np.abs(phase_rho))) or 1.0
    lo, hi = p_nodes[0], p_nodes[-1]
    covered_mass = 0.0
    for ix in range(nx):
        col_p = P[:, ix]
        col_r = phase_rho[:, ix]
        if np.any(np.diff(col_p) <= 0):
            raise CausticError(time, 0.0, sigma_floor)
        gaps = col_p[0] > lo or col_p[-1] < hi
        if gaps and max(abs(col_r[0]), abs(col_r[-1])) > coverage_tol * peak:
            raise CoverageError(f"leaves span [{col_p[0]:.4g}, {col_p[-1]:.4g}] at x-node {ix}, "
                                f"short of the momentum range [{lo:.4g}, {hi:.4g}]")
        inside = (p_nodes >= col_p[0]) & (p_nodes <= col_p[-1])
        if np.min(S[:, ix]) < 10.0 * sigma_floor:
            values[ix, inside] = np.interp(p_nodes[inside], col_p, col_r)
        else:
            values[ix, inside] = PchipInterpolator(col_p, col_r)(p_nodes[inside])
        in_range = (col_p >= lo - 0.5 * grid.p_spacing[0]) & (col_p <= hi + 0.5 * grid.p_spacing[0])
        covered_mass += float(np.sum(R[in_range, ix]))
    covered_mass *= dk * grid.x.cell_volume
    return values, covered_mass


def _reconstruct_2d(P, phase_rho, R, dk, grid):
    x_shape = grid.x.shape
    p_mesh = np.stack(np.meshgrid(*grid.p_axes, indexing="ij"), axis=-1).reshape(-1, 2)
    values = np.zeros(grid.shape)
    for ix in np.ndindex(*x_shape):
        points = np.stack([P[0][(slice(None),) + ix], P[1][(slice(None),) + ix]], axis=-1)
        samples = phase_rho[(slice(None),) + ix]
        values[ix] = griddata(points, samples, p_mesh, method="linear", fill_value=0.0).reshape(grid.p_points)
    covered_mass = float(np.sum(R)) * dk * grid.x.cell_volume
    return values, covered_mass


# ---------------------------------------------------------------------------
# equivalence of the three schemes
# ---------------------------------------------------------------------------

PAIRS = (("liouville", "characteristics"), ("liouville", "leaves"), ("characteristics", "leaves"))


@dataclass
class EquivalenceReport:
    grids: list[PhaseGrid]
    results: dict[str, PhaseSpaceDensity]
    distances: dict[str, float]
    reference_distances: dict[str, float]
    resolution_distances: list[dict[str, float]]
    orders: dict[str, float]
    mass_drift: dict[str, float]
    relabel_count: int
    min_sigma: float
    series: pd.DataFrame
    degenerate: bool = False


def _pair_name(a: str, b: str) -> str:
    return f"{a}_vs_{b}"


def _run_methods(H, initial, packet, grid, T, methods, dt, cfl, sigma_floor, segments):
    degenerate = T == 0 or dt == 0
    solver = LiouvilleSolver(H, grid, cfl)
    step = dt if dt is not None else solver.stable_dt()
    energy = hamiltonian_on_phase_grid(H, grid)
    rows = []
    state: dict = {}
    if "liouville" in methods:
        state["liouville"] = initial
    if "characteristics" in methods:
        state["characteristics"] = ParticleEnsemble.from_density(initial)
    margin = leaf_margin(H, grid, T / segments) if "leaves" in methods and not degenerate else 0
    if "leaves" in methods:
        state["leaves"] = slice_into_leaves(initial, margin=margin)
    min_sigma = 1.0
    relabels = 0

    def record(t, current):
        probe = current.get("liouville") or current.get("leaves_density") or initial
        ref = math.nan
        if packet is not None and H.exact_flow is not None:
            ref = probe.l1_distance(reference_density(packet, H, grid, t))
        rows.append({"t": t, "mass": probe.mass(),
                     "energy_mean": float(np.sum(energy * probe.values) * grid.cell_volume),
                     "L1_vs_reference": ref,
                     "min_sigma": min_sigma if "leaves" in methods else math.nan})

    record(0.0, {})
    finals = {name: initial for name in methods}
    if not degenerate:
        tau = T / segments
        for s in range(segments):
            current = {}
            if "liouville" in methods:
                state["liouville"] = solver.evolve(state["liouville"], tau, step)
                current["liouville"] = state["liouville"]
            if "characteristics" in methods:
                state["characteristics"] = state["characteristics"].advance(H, tau, step)
            if "leaves" in methods:
                advanced, low = advance_leaves(H, state["leaves"], tau, step, cfl, sigma_floor)
                min_sigma = min(min_sigma, low)
                rebuilt = reconstruct_phase_density(advanced, grid, sigma_floor)
                current["leaves_density"] = rebuilt
                finals["leaves"] = rebuilt
                if s < segments - 1:
                    state["leaves"] = slice_into_leaves(rebuilt, time=advanced[0].time, margin=margin)
                    relabels += 1
            record((s + 1) * tau, current)
        if "liouville" in methods:
            finals["liouville"] = state["liouville"]
        if "characteristics" in methods:
            ens = state["characteristics"]
            finals["characteristics"] = deposit_ensemble(ens.x, ens.p, ens.weights, grid)
    return finals, pd.DataFrame(rows), relabels, min_sigma


def verify_classical_equivalence(H: HamiltonianSpec, rho0, T: float,
                                 resolutions: Sequence[PhaseGrid] | None = None,
                                 methods: Sequence[str] = METHODS, dt: float | None = None,
                                 cfl: float = 0.9, sigma_floor: float = 1e-3,
                                 segments: int = 8) -> EquivalenceReport:
    """Evolve ``rho0`` by the selected schemes and compare them.

    ``rho0`` is either a ``GaussianPacket`` (sampled on every grid of
    ``resolutions``) or a ``PhaseSpaceDensity`` (single resolution). Leaves are
    re-sliced horizontally after each of the ``segments`` sub-intervals.
    """
    methods = tuple(m for m in METHODS if m in methods)
    if not methods:
        raise StateError("no classical method selected")
    packet = rho0 if isinstance(rho0, GaussianPacket) else None
    if packet is None:
        grids = [rho0.grid]
    else:
        if not resolutions:
            raise GridError("a GaussianPacket needs at least one phase grid")
        grids = sorted(resolutions, key=lambda g: g.x.points[0])
    if dt is None and len(grids) > 1 and T != 0:
        dt = min(LiouvilleSolver(H, g, cfl).stable_dt() for g in grids)
    degenerate = T == 0 or dt == 0
    per_grid = []
    finals = series = None
    relabels, min_sigma = 0, math.nan
    for grid in grids:
        initial = packet.sample(grid) if packet is not None else rho0
        logger.info("[classical] %s on %s phase grid, T=%g, methods=%s",
                    H.name, "x".join(map(str, grid.shape)), T, ",".join(methods))
        finals, series, relabels, min_sigma = _run_methods(
            H, initial, packet, grid, T, methods, dt, cfl, sigma_floor, segments)
        per_grid.append({_pair_name(a, b): finals[a].l1_distance(finals[b])
                         for a, b in PAIRS if a in finals and b in finals})
        finals["initial"] = initial
    initial = finals.pop("initial")
    reference = {}
    if packet is not None and H.exact_flow is not None:
        exact = reference_density(packet, H, grids[-1], T)
        reference = {name: dens.l1_distance(exact) for name, dens in finals.items()}
    reference["liouville_vs_initial"] = finals[methods[0]].l1_distance(initial)
    orders = {}
    if len(grids) > 1 and not degenerate:
        for name in per_grid[0]:
            rates = []
            for coarse, fine, gc, gf in zip(per_grid, per_grid[1:], grids, grids[1:]):
                ratio = gc.x.spacing[0] / gf.x.spacing[0]
                if fine[name] > 0 and coarse[name] > 0:
                    rates.append(math.log(coarse[name] / fine[name]) / math.log(ratio))
            orders[name] = min(rates) if rates else math.inf
    mass0 = initial.mass()
    return EquivalenceReport(
        grids=list(grids), results=finals, distances=per_grid[-1],
        reference_distances=reference, resolution_distances=per_grid, orders=orders,
        mass_drift={name: abs(dens.mass() - mass0) for name, dens in finals.items()},
        relabel_count=relabels, min_sigma=min_sigma, series=series, degenerate=degenerate)
