"""
Canonical Hamiltonian class ``H = 1/2 h^{ij} (p_i + A_i)(p_j + A_j) + U`` and
its derived quantities: gradients, Lagrangian, Poisson bracket, charges.

Points and covectors carry a leading component axis, shape ``(dim, ...)``.
One-dimensional callers may pass plain scalars or arrays; a component axis of
length one is added for them.

Bracket convention: ``{F, G} = dF/dp_j dG/dx^j - dG/dp_j dF/dx^j``, hence
``{p, x} = +1`` and the Liouville equation reads ``d rho/dt = {rho, H}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from src.errors import GridError, UnsupportedMetricError
from src.grids import ConfigGrid, PhaseGrid, axis_derivative, derivative

logger = logging.getLogger(__name__)

PointFn = Callable[[np.ndarray], np.ndarray]


def as_points(values, dim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if dim == 1:
        if arr.ndim == 0 or arr.shape[0] != 1:
            arr = arr[None, ...]
        return arr
    if arr.ndim == 0 or arr.shape[0] != dim:
        raise GridError(f"expected a leading component axis of length {dim}, got shape {arr.shape}")
    return arr


def _contract(h: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    if h.ndim == 2:
        return np.einsum("ij,i...,j...->...", h, q, r)
    return np.einsum("ij...,i...,j...->...", h, q, r)


def _apply(h: np.ndarray, q: np.ndarray) -> np.ndarray:
    if h.ndim == 2:
        return np.einsum("ij,j...->i...", h, q)
    return np.einsum("ij...,j...->i...", h, q)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    name: str
    dim: int
    metric: np.ndarray
    potential: PointFn
    potential_gradient: PointFn
    vector_potential: PointFn | None = None
    # jacobian[j, k] = d_k A_j
    vector_potential_jacobian: PointFn | None = None
    # position dependent metric, classical layer only; gradient[i, j, k] = d_k h^{ij}
    metric_field: PointFn | None = None
    metric_gradient: PointFn | None = None
    exact_flow: Callable | None = None
    period: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        metric = np.atleast_2d(np.asarray(self.metric, dtype=float))
        if metric.shape != (self.dim, self.dim):
            raise UnsupportedMetricError(f"metric must be {self.dim}x{self.dim}, got {metric.shape}")
        if not np.allclose(metric, metric.T, atol=1e-14):
            raise UnsupportedMetricError("metric must be symmetric")
        if np.min(np.linalg.eigvalsh(metric)) <= 0:
            raise UnsupportedMetricError("metric must be positive definite")
        object.__setattr__(self, "metric", metric)

    @property
    def constant_metric(self) -> bool:
        return self.metric_field is None

    @property
    def separable(self) -> bool:
        return self.vector_potential is None and self.constant_metric

    def A(self, x: np.ndarray) -> np.ndarray:
        if self.vector_potential is None:
            return np.zeros_like(x)
        return np.broadcast_to(self.vector_potential(x), x.shape)

    def metric_at(self, x: np.ndarray) -> np.ndarray:
        if self.metric_field is None:
            return self.metric
        return self.metric_field(x)

    def U(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.potential(x), x.shape[1:])


def eval_hamiltonian(H: HamiltonianSpec, x, p) -> np.ndarray:
    x, p = as_points(x, H.dim), as_points(p, H.dim)
    q = p + H.A(x)
    return 0.5 * _contract(H.metric_at(x), q, q) + H.U(x)


def velocity(H: HamiltonianSpec, x, p) -> np.ndarray:
    """``dH/dp_j = h^{ij} (p_i + A_i)``."""
    x, p = as_points(x, H.dim), as_points(p, H.dim)
    return _apply(H.metric_at(x), p + H.A(x))


def force(H: HamiltonianSpec, x, p) -> np.ndarray:
    """``dH/dx^k``; the canonical equations use ``dp/dt = -force``."""
    x, p = as_points(x, H.dim), as_points(p, H.dim)
    q = p + H.A(x)
    h = H.metric_at(x)
    out = np.broadcast_to(H.potential_gradient(x), x.shape).astype(float)
    if H.vector_potential_jacobian is not None:
        out = out + np.einsum("j...,jk...->k...", _apply(h, q), H.vector_potential_jacobian(x))
    if H.metric_gradient is not None:
        out = out + 0.5 * np.einsum("i...,ijk...,j...->k...", q, H.metric_gradient(x), q)
    return out


def hamiltonian_gradients(H: HamiltonianSpec, x, p) -> tuple[np.ndarray, np.ndarray]:
    return velocity(H, x, p), force(H, x, p)


def lagrangian_of(H: HamiltonianSpec, x, p) -> np.ndarray:
    """``L = p . dH/dp - H``."""
    x, p = as_points(x, H.dim), as_points(p, H.dim)
    return np.sum(p * velocity(H, x, p), axis=0) - eval_hamiltonian(H, x, p)


# ---------------------------------------------------------------------------
# phase-space fields
# ---------------------------------------------------------------------------

def _phase_values(F, grid: PhaseGrid | None) -> tuple[np.ndarray, PhaseGrid | None]:
    if hasattr(F, "values") and hasattr(F, "grid"):
        if grid is not None and F.grid != grid:
            raise GridError("phase-space fields live on different grids")
        return np.asarray(F.values), F.grid
    return np.asarray(F), grid


def poisson_bracket(F, G, grid: PhaseGrid | None = None) -> np.ndarray:
    """``{F, G}`` sampled on a phase grid (FFT or fourth-order differences per axis)."""
    F, grid = _phase_values(F, grid)
    G, grid = _phase_values(G, grid)
    if grid is None:
        raise GridError("poisson_bracket needs a PhaseGrid")
    if F.shape != grid.shape or G.shape != grid.shape:
        raise GridError(f"fields {F.shape} and {G.shape} do not match grid {grid.shape}")
    d = grid.dim
    schemes = grid.schemes()
    steps = grid.spacings
    out = np.zeros(grid.shape, dtype=np.result_type(F, G, float))
    for j in range(d):
        dF_x = axis_derivative(F, steps[j], j, schemes[j])
        dG_x = axis_derivative(G, steps[j], j, schemes[j])
        dF_p = axis_derivative(F, steps[d + j], d + j, schemes[d + j])
        dG_p = axis_derivative(G, steps[d + j], d + j, schemes[d + j])
        out = out + (dF_p * dG_x - dG_p * dF_x)
    return out


def hamiltonian_on_phase_grid(H: HamiltonianSpec, grid: PhaseGrid) -> np.ndarray:
    X, P = grid.mesh()
    return eval_hamiltonian(H, X, P)


@dataclass(frozen=True, eq=False)
class ChargeSpec:
    """``Q = A^{ij} p_i p_j + B^i(x) p_i + C(x)``."""
    name: str
    dim: int
    quadratic: np.ndarray
    linear: PointFn | None = None
    scalar: PointFn | None = None

    def __post_init__(self):
        quad = np.atleast_2d(np.asarray(self.quadratic, dtype=float))
        if quad.shape != (self.dim, self.dim) or not np.allclose(quad, quad.T):
            raise UnsupportedMetricError("charge quadratic part must be a symmetric dim x dim matrix")
        object.__setattr__(self, "quadratic", quad)

    def B(self, x: np.ndarray) -> np.ndarray:
        if self.linear is None:
            return np.zeros_like(x)
        return np.broadcast_to(self.linear(x), x.shape)

    def C(self, x: np.ndarray) -> np.ndarray:
        if self.scalar is None:
            return np.zeros(x.shape[1:])
        return np.broadcast_to(self.scalar(x), x.shape[1:])

    def evaluate(self, x, p) -> np.ndarray:
        x, p = as_points(x, self.dim), as_points(p, self.dim)
        return _contract(self.quadratic, p, p) + np.sum(self.B(x) * p, axis=0) + self.C(x)


def charge_on_phase_grid(Q: ChargeSpec, grid: PhaseGrid) -> np.ndarray:
    X, P = grid.mesh()
    return Q.evaluate(X, P)


def angular_momentum_charge() -> ChargeSpec:
    """``L3 = x p_y - y p_x``."""
    return ChargeSpec("L3", 2, np.zeros((2, 2)), linear=lambda x: np.stack([-x[1], x[0]]))


def energy_charge(H: HamiltonianSpec) -> ChargeSpec:
    if not H.constant_metric:
        raise UnsupportedMetricError("energy charge needs a constant metric")
    h = H.metric

    def linear(x):
        return _apply(h, H.A(x))

    def scalar(x):
        a = H.A(x)
        return 0.5 * _contract(h, a, a) + H.U(x)

    return ChargeSpec("energy", H.dim, 0.5 * h, linear=linear, scalar=scalar)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _zeros_like_points(x):
    return np.zeros(x.shape[1:])


def free(dim: int = 1, mass: float = 1.0) -> HamiltonianSpec:
    inv = 1.0 / mass

    def flow(x, p, t):
        return x + inv * p * t, p

    return HamiltonianSpec("free", dim, inv * np.eye(dim), _zeros_like_points, np.zeros_like,
                           exact_flow=flow, params={"mass": mass})


def harmonic(omega: float = 1.0, dim: int = 1) -> HamiltonianSpec:
    w2 = omega * omega

    def flow(x, p, t):
        c, s = np.cos(omega * t), np.sin(omega * t)
        return x * c + p * s / omega, -omega * x * s + p * c

    return HamiltonianSpec("harmonic", dim, np.eye(dim),
                           lambda x: 0.5 * w2 * np.sum(x * x, axis=0),
                           lambda x: w2 * x,
                           exact_flow=flow, period=2.0 * np.pi / omega, params={"omega": omega})


def central(omega: float = 1.0) -> HamiltonianSpec:
    H = harmonic(omega, dim=2)
    return HamiltonianSpec("central", 2, H.metric, H.potential, H.potential_gradient,
                           exact_flow=H.exact_flow, period=H.period, params={"omega": omega})


def box(dim: int = 1) -> HamiltonianSpec:
    H = free(dim)
    return HamiltonianSpec("box", dim, H.metric, H.potential, H.potential_gradient,
                           exact_flow=H.exact_flow)


def vector_potential(a0: float = 0.0, a1: float = 1.0) -> HamiltonianSpec:
    """Minimal coupling with ``A(x) = a0 + a1 sin x``."""
    return HamiltonianSpec("vector-potential", 1, np.eye(1), _zeros_like_points, np.zeros_like,
                           vector_potential=lambda x: a0 + a1 * np.sin(x),
                           vector_potential_jacobian=lambda x: (a1 * np.cos(x))[:, None],
                           params={"a0": a0, "a1": a1})


def pendulum(g: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec("pendulum", 1, np.eye(1),
                           lambda x: g * (1.0 - np.cos(x[0])),
                           lambda x: g * np.sin(x),
                           params={"g": g})


def _periodic_spline(grid: ConfigGrid, values: np.ndarray) -> CubicSpline:
    lo, hi = grid.extents[0]
    xs = np.append(grid.axes[0], hi)
    return CubicSpline(xs, np.append(values, values[0]), bc_type="periodic")


def tabulated(grid: ConfigGrid, U_values, A_values=None) -> HamiltonianSpec:
    """Potentials sampled on a 1-D periodic grid; gradients are spectral, off-node values splined."""
    if grid.dim != 1 or grid.boundary != "periodic":
        raise GridError("tabulated potentials need a 1-D periodic grid")
    U_values = np.asarray(U_values, dtype=float)
    lo, _ = grid.extents[0]
    L = grid.lengths[0]
    U_spline = _periodic_spline(grid, U_values)
    dU_spline = _periodic_spline(grid, derivative(U_values, grid, 0))

    def wrap(x):
        return lo + np.mod(x - lo, L)

    A_fn = A_jac = None
    if A_values is not None:
        A_values = np.asarray(A_values, dtype=float)
        A_spline = _periodic_spline(grid, A_values)
        dA_spline = _periodic_spline(grid, derivative(A_values, grid, 0))
        A_fn = lambda x: A_spline(wrap(x))
        A_jac = lambda x: dA_spline(wrap(x))[:, None]
    logger.debug("tabulated hamiltonian on %d nodes (vector potential: %s)", grid.points[0], A_values is not None)
    return HamiltonianSpec("tabulated", 1, np.eye(1),
                           lambda x: U_spline(wrap(x[0])),
                           lambda x: dU_spline(wrap(x)),
                           vector_potential=A_fn, vector_potential_jacobian=A_jac)


PRESETS = {
    "free": free,
    "harmonic": harmonic,
    "box": box,
    "vector-potential": vector_potential,
    "central": central,
    "pendulum": pendulum,
}


def build_hamiltonian(preset: str, **params) -> HamiltonianSpec:
    try:
        factory = PRESETS[preset]
    except KeyError:
        raise GridError(f"unknown hamiltonian preset '{preset}'") from None
    return factory(**params)
