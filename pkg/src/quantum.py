"""
Quantum layer on a single periodic (or box-doubled) chart.

States are sampled on the ConfigGrid nodes. A DensityMatrix stores
``rho_ij = psi_i conj(psi_j) dV`` so that its trace is the probability and
``<x_i|rho|x_i> / dV`` is the position density. Operators are dense matrices
acting on node samples and are only built for grids with at most
``MAX_BASIS`` nodes; 2-D states (charge checks) are propagated matrix-free.

Box-doubled grids hold the odd (Dirichlet) extension of the state, so only
even momentum powers are available there.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy import linalg

from src.classical import step_characteristics
from src.errors import (BandwidthError, GridError, HermiticityError, NodeFloorError,
                        PictureMismatchError, StateError, UnsupportedMetricError)
from src.grids import (ConfigGrid, CovectorField, ScalarField, SynchronicityField, derivative,
                       extend, map_chunks, momentum_of_synchronicity)
from src.hamiltonian import ChargeSpec, HamiltonianSpec, as_points

logger = logging.getLogger(__name__)

MAX_BASIS = 256
HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-9


def _check_quantum_grid(grid: ConfigGrid) -> None:
    if grid.boundary == "open":
        raise GridError("the quantum layer needs a periodic or box-doubled grid")


def _check_basis(grid: ConfigGrid) -> None:
    _check_quantum_grid(grid)
    if grid.node_count > MAX_BASIS:
        raise GridError(f"dense operators are limited to {MAX_BASIS} nodes, grid has {grid.node_count}")


def _require_constant_metric(H: HamiltonianSpec) -> None:
    if not H.constant_metric:
        raise UnsupportedMetricError(f"'{H.name}' has a position-dependent metric; the quantum layer needs a constant one")


def _mode_numbers(n: int) -> np.ndarray:
    return np.rint(sfft.fftfreq(n) * n).astype(int)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: ConfigGrid
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise GridError(f"wavefunction shape {values.shape} does not match grid {self.grid.shape}")
        if not self.hbar > 0:
            raise StateError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume)

    def normalized(self) -> "WaveFunction":
        n = self.norm()
        if not n > 0 or not math.isfinite(n):
            raise StateError("cannot normalize a zero or non-finite wavefunction")
        return WaveFunction(self.grid, self.values / math.sqrt(n), self.hbar)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def position_mean(self) -> np.ndarray:
        X = self.grid.mesh()
        rho = self.density()
        return np.array([np.sum(X[a] * rho) for a in range(self.grid.dim)]) * self.grid.cell_volume

    def projector(self) -> "DensityMatrix":
        v = self.values.ravel()
        return DensityMatrix(self.grid, np.outer(v, v.conj()) * self.grid.cell_volume, self.hbar)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    grid: ConfigGrid
    matrix: np.ndarray
    hbar: float = 1.0
    # representational only: negative spectral weights are allowed, no dynamics claims
    signed_weights: bool = False

    def __post_init__(self):
        _check_basis(self.grid)
        m = np.asarray(self.matrix, dtype=complex)
        n = self.grid.node_count
        if m.shape != (n, n):
            raise GridError(f"density matrix must be {n}x{n}, got {m.shape}")
        residual = float(np.max(np.abs(m - m.conj().T)))
        if residual > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m)))):
            raise HermiticityError(residual, "density matrix")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_spectrum(cls, weights: Sequence[float], states: Sequence[WaveFunction],
                      signed_weights: bool = False) -> "DensityMatrix":
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0) and not signed_weights:
            raise StateError("negative spectral weights need signed_weights=True")
        grid, hbar = states[0].grid, states[0].hbar
        m = sum(w * s.projector().matrix for w, s in zip(weights, states))
        return cls(grid, m, hbar, signed_weights)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def diagonal_density(self) -> np.ndarray:
        """``<x|rho|x>`` as a density on the grid nodes."""
        return np.real(np.diag(self.matrix)).reshape(self.grid.shape) / self.grid.cell_volume

    def spectrum(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)

    def check_positive(self, tol: float = 1e-10) -> None:
        if self.signed_weights:
            return
        low = float(self.spectrum()[0])
        if low < -tol:
            raise StateError(f"density matrix has negative weight {low:.3e}")

    def distance(self, other: "DensityMatrix") -> float:
        return float(np.max(np.abs(self.matrix - other.matrix)))


@dataclass(frozen=True, eq=False)
class FourierDensity:
    """Plane-wave coefficients: ``table[a, b]`` multiplies ``|k_a><k_b|``.

    Rows and columns follow the FFT mode order ``0, 1, ..., -1``; mode ``m``
    is the wavenumber ``2 pi m / L``. A pair ``(k + k'/2, k - k'/2)`` in
    centre/relative labels is simply the ket/bra pair of the table.
    """
    grid: ConfigGrid
    table: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        if self.grid.boundary != "periodic" or self.grid.dim != 1:
            raise GridError("Fourier densities live on a 1-D periodic chart")
        t = np.asarray(self.table, dtype=complex)
        n = self.grid.points[0]
        if t.shape != (n, n):
            raise GridError(f"coefficient table must be {n}x{n}, got {t.shape}")
        object.__setattr__(self, "table", t)

    @property
    def modes(self) -> np.ndarray:
        return _mode_numbers(self.grid.points[0])

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.table - self.table.conj().T)))

    def entry(self, k: int, k_prime: int) -> complex:
        n = self.grid.points[0]
        return complex(self.table[k % n, k_prime % n])

    @classmethod
    def from_entries(cls, grid: ConfigGrid, entries: dict, hbar: float = 1.0) -> "FourierDensity":
        n = grid.points[0]
        table = np.zeros((n, n), dtype=complex)
        half = n // 2
        for (k, k_prime), value in entries.items():
            if max(abs(k), abs(k_prime)) >= half:
                raise BandwidthError(f"mode ({k}, {k_prime}) is beyond the grid bandwidth {half}")
            table[k % n, k_prime % n] = value
        return cls(grid, table, hbar)


def _plane_wave_basis(grid: ConfigGrid) -> np.ndarray:
    n = grid.points[0]
    x = grid.axis(0) - grid.extents[0][0]
    k = 2.0 * np.pi * _mode_numbers(n) / grid.lengths[0]
    return np.exp(1j * np.outer(x, k)) / math.sqrt(n)


def density_from_fourier(coeffs: FourierDensity) -> DensityMatrix:
    residual = coeffs.hermitian_residual()
    if residual > 1e-10:
        raise HermiticityError(residual, "Fourier coefficient table")
    U = _plane_wave_basis(coeffs.grid)
    m = U @ coeffs.table @ U.conj().T
    return DensityMatrix(coeffs.grid, 0.5 * (m + m.conj().T), coeffs.hbar)


def fourier_from_density(rho: DensityMatrix) -> FourierDensity:
    if rho.grid.boundary != "periodic" or rho.grid.dim != 1:
        raise GridError("Fourier densities live on a 1-D periodic chart")
    U = _plane_wave_basis(rho.grid)
    return FourierDensity(rho.grid, U.conj().T @ rho.matrix @ U, rho.hbar)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorRep:
    matrix: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GridError(f"operator must be a square matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def apply(self, psi: WaveFunction) -> np.ndarray:
        return (self.matrix @ psi.values.ravel()).reshape(psi.grid.shape)

    def expectation(self, psi: WaveFunction) -> float:
        v = psi.values.ravel()
        return float(np.real(np.vdot(v, self.matrix @ v)) * psi.grid.cell_volume)

    def expectation_in(self, rho: DensityMatrix) -> float:
        return float(np.real(np.trace(rho.matrix @ self.matrix)))

    def commutator(self, other: "OperatorRep") -> "OperatorRep":
        return OperatorRep(self.matrix @ other.matrix - other.matrix @ self.matrix, hermitian=False)


def _axis_power(grid: ConfigGrid, hbar: float, order: int, axis: int) -> np.ndarray:
    n = grid.points[axis]
    if grid.boundary == "periodic":
        k = grid.wavenumbers(axis)
        vals = (hbar * k) ** order
        if order % 2 and n % 2 == 0:
            vals[n // 2] = 0.0
        x = grid.axis(axis) - grid.extents[axis][0]
        U = np.exp(1j * np.outer(x, k)) / math.sqrt(n)
        return (U * vals[None, :]) @ U.conj().T
    if order % 2:
        raise GridError("odd momentum powers do not keep the box boundary condition")
    S = sfft.dst(np.eye(n), type=2, norm="ortho", axis=0)
    kn = np.pi * np.arange(1, n + 1) / grid.lengths[axis]
    return (S.T * (hbar * kn) ** order) @ S


def momentum_power(grid: ConfigGrid, hbar: float = 1.0, order: int = 1, axis: int = 0) -> np.ndarray:
    """Dense ``p_axis^order`` with ``p = -i hbar d``, diagonal in the plane-wave (or sine) basis."""
    _check_basis(grid)
    if order == 0:
        return np.eye(grid.node_count, dtype=complex)
    block = _axis_power(grid, hbar, order, axis)
    out = np.ones((1, 1))
    for a in range(grid.dim):
        out = np.kron(out, block if a == axis else np.eye(grid.points[a]))
    return out.astype(complex)


def momentum_matrix(grid: ConfigGrid, hbar: float = 1.0, axis: int = 0) -> np.ndarray:
    return momentum_power(grid, hbar, 1, axis)


def hamiltonian_matrix(H: HamiltonianSpec, grid: ConfigGrid, hbar: float = 1.0) -> np.ndarray:
    """``1/2 (p + A) h (p + A) + U`` in the node basis, symmetric ordering."""
    _require_constant_metric(H)
    _check_basis(grid)
    X = grid.mesh()
    A = H.A(X).reshape(grid.dim, -1)
    h = H.metric
    out = np.diag(H.U(X).ravel()).astype(complex)
    if not np.any(A):
        for i in range(grid.dim):
            for j in range(grid.dim):
                if h[i, j] == 0:
                    continue
                if i == j:
                    out += 0.5 * h[i, i] * momentum_power(grid, hbar, 2, i)
                else:
                    out += 0.5 * h[i, j] * momentum_matrix(grid, hbar, i) @ momentum_matrix(grid, hbar, j)
    else:
        q = [momentum_matrix(grid, hbar, i) + np.diag(A[i]) for i in range(grid.dim)]
        for i in range(grid.dim):
            for j in range(grid.dim):
                if h[i, j] != 0:
                    out += 0.5 * h[i, j] * q[i] @ q[j]
    return 0.5 * (out + out.conj().T)


def _sample_weight(f, grid: ConfigGrid) -> np.ndarray:
    values = f(grid.mesh()) if callable(f) else f
    values = np.broadcast_to(np.asarray(values), grid.shape)
    if np.iscomplexobj(values):
        if np.max(np.abs(values.imag)) > 1e-12 * max(1.0, float(np.max(np.abs(values)))):
            raise StateError("observable weight functions must be real")
        values = values.real
    return np.asarray(values, dtype=float).ravel()


def build_observable(terms: Sequence[tuple], grid: ConfigGrid, hbar: float = 1.0) -> OperatorRep:
    """``sum_n [f_n, p^n]_+`` for terms ``(n, f_n)`` or ``(n, f_n, axis)``.

    ``f_n`` is a callable of the ``(dim, *points)`` mesh or an array of node
    values. The anticommutator is taken literally, so an order-0 term gives
    ``2 f``.
    """
    _check_basis(grid)
    total = np.zeros((grid.node_count, grid.node_count), dtype=complex)
    for term in terms:
        order, f = int(term[0]), term[1]
        axis = int(term[2]) if len(term) > 2 else 0
        if not 0 <= order <= 4:
            raise StateError(f"observable orders must be between 0 and 4, got {order}")
        F = np.diag(_sample_weight(f, grid))
        Pn = momentum_power(grid, hbar, order, axis)
        total += F @ Pn + Pn @ F
    op = OperatorRep(total, hermitian=True)
    residual = op.residual()
    if residual > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(total)))):
        raise HermiticityError(residual, "observable")
    return op


def position_operator(grid: ConfigGrid, axis: int = 0) -> OperatorRep:
    return build_observable([(0, lambda X: 0.5 * X[axis])], grid)


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

class SplitStepPropagator:
    """Strang step ``V/2, K, V/2``.

    A constant vector potential is folded into the kinetic multiplier
    ``exp(-i dt/hbar * 1/2 (hbar k + A) h (hbar k + A))``; a position-dependent
    one switches to Crank-Nicolson on the dense Hamiltonian.
    """

    def __init__(self, H: HamiltonianSpec, grid: ConfigGrid, hbar: float, dt: float):
        _require_constant_metric(H)
        _check_quantum_grid(grid)
        self.H = H
        self.grid = grid
        self.hbar = hbar
        self.dt = dt
        X = grid.mesh()
        A = H.A(X).reshape(grid.dim, -1)
        a0 = A[:, 0]
        self.constant_potential = bool(np.max(np.abs(A - a0[:, None]), initial=0.0) <= 1e-14)
        self._lu = None
        if self.constant_potential:
            if grid.boundary != "periodic" and np.any(a0):
                raise GridError("a vector potential breaks the box boundary condition")
            self.half_potential = np.exp(-0.5j * dt / hbar * H.U(X))
            ks = np.meshgrid(*[grid.wavenumbers(a) for a in range(grid.dim)], indexing="ij")
            q = np.stack([hbar * k + a0[i] for i, k in enumerate(ks)])
            energy = 0.5 * np.einsum("i...,ij,j...->...", q, H.metric, q)
            self.kinetic = np.exp(-1j * dt / hbar * energy)
        else:
            if grid.boundary != "periodic":
                raise GridError("a position-dependent vector potential needs a periodic grid")
            Hm = hamiltonian_matrix(H, grid, hbar)
            eye = np.eye(Hm.shape[0])
            self._lu = linalg.lu_factor(eye + 0.5j * dt / hbar * Hm)
            self._explicit = eye - 0.5j * dt / hbar * Hm

    def _kinetic_step(self, values: np.ndarray) -> np.ndarray:
        d = self.grid.dim
        axes = tuple(range(d))
        extra = (slice(None),) * d + (None,) * (values.ndim - d)
        if self.grid.boundary == "periodic":
            return sfft.ifftn(sfft.fftn(values, axes=axes) * self.kinetic[extra], axes=axes)
        ext = values
        for a in axes:
            ext = extend(ext, a, "odd")
        out = sfft.ifftn(sfft.fftn(ext, axes=axes) * self.kinetic[extra], axes=axes)
        return out[tuple(slice(0, n) for n in self.grid.points)]

    def _apply_block(self, block: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return linalg.lu_solve(self._lu, self._explicit @ block)
        m = block.shape[1]
        v = block.reshape(self.grid.shape + (m,))
        v = self.half_potential[..., None] * v
        v = self._kinetic_step(v)
        v = self.half_potential[..., None] * v
        return v.reshape(-1, m)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Advance node-sample vectors of shape ``(N,)`` or ``(N, m)`` by one step."""
        vectors = np.asarray(vectors, dtype=complex)
        if self.dt == 0:
            return vectors.copy()
        flat = vectors.reshape(self.grid.node_count, -1)
        if flat.shape[1] == 1:
            out = self._apply_block(flat)
        else:
            cols = np.arange(flat.shape[1])
            out = np.concatenate(map_chunks(lambda c: self._apply_block(flat[:, c]), cols), axis=1)
        return out.reshape(vectors.shape)

    def conjugate(self, matrix: np.ndarray) -> np.ndarray:
        """``U M U^dagger``."""
        left = self.apply(matrix)
        return self.apply(left.conj().T).conj().T

    def __call__(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction(psi.grid, self.apply(psi.values.ravel()).reshape(psi.grid.shape), psi.hbar)


def default_quantum_dt(H: HamiltonianSpec, grid: ConfigGrid, hbar: float = 1.0) -> float:
    """Quarter-cell transit time of the fastest resolved mode, capped at 1e-2."""
    h_min = min(grid.spacing)
    k_max = np.pi / h_min
    a_max = float(np.max(np.abs(H.A(grid.mesh())), initial=0.0))
    v_max = float(np.max(linalg.eigvalsh(H.metric))) * (hbar * k_max + a_max)
    return min(1e-2, 0.25 * h_min / v_max)


def _schedule(T: float, dt: float) -> tuple[int, float]:
    if T == 0 or dt == 0:
        return 0, 0.0
    steps = max(1, math.ceil(abs(T) / abs(dt) - 1e-9))
    return steps, T / steps


def step_schrodinger(H: HamiltonianSpec, psi: WaveFunction, dt: float) -> WaveFunction:
    if not np.all(np.isfinite(psi.values)):
        raise StateError("wavefunction has non-finite values")
    norm = psi.norm()
    if abs(norm - 1.0) > NORM_TOL:
        raise StateError(f"wavefunction is not normalized (norm {norm:.12f})")
    return SplitStepPropagator(H, psi.grid, psi.hbar, dt)(psi)


def evolve_wavefunction(H: HamiltonianSpec, psi: WaveFunction, T: float, dt: float | None = None) -> WaveFunction:
    steps, step = _schedule(T, dt if dt is not None else default_quantum_dt(H, psi.grid, psi.hbar))
    prop = SplitStepPropagator(H, psi.grid, psi.hbar, step)
    for _ in range(steps):
        psi = prop(psi)
    return psi


def step_quantum_liouville(H: HamiltonianSpec, rho: DensityMatrix, dt: float) -> DensityMatrix:
    """``d rho/dt = [rho, H] / (-i hbar)`` as ``U rho U^dagger`` with the split-step U."""
    m = SplitStepPropagator(H, rho.grid, rho.hbar, dt).conjugate(rho.matrix)
    return DensityMatrix(rho.grid, 0.5 * (m + m.conj().T), rho.hbar, rho.signed_weights)


class ExactPropagator:
    """``exp(-i H t / hbar)`` from one eigendecomposition of the dense Hamiltonian."""

    def __init__(self, H: HamiltonianSpec, grid: ConfigGrid, hbar: float = 1.0):
        self.grid = grid
        self.hbar = hbar
        self.matrix = hamiltonian_matrix(H, grid, hbar)
        self.energies, self.modes = linalg.eigh(self.matrix)

    def unitary(self, t: float) -> np.ndarray:
        return (self.modes * np.exp(-1j * self.energies * t / self.hbar)[None, :]) @ self.modes.conj().T

    def __call__(self, matrix: np.ndarray, t: float) -> np.ndarray:
        U = self.unitary(t)
        return U @ matrix @ U.conj().T

    def eigenstate(self, index: int = 0) -> WaveFunction:
        v = self.modes[:, index] / math.sqrt(self.grid.cell_volume)
        return WaveFunction(self.grid, v.reshape(self.grid.shape), self.hbar)


# ---------------------------------------------------------------------------
# moment equations and pictures
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    density_residual: float
    current_residual: float
    ehrenfest_residual: float
    dt: float

    @property
    def residual(self) -> float:
        return max(self.density_residual, self.current_residual)


def _diag_density(m: np.ndarray, grid: ConfigGrid) -> np.ndarray:
    return np.real(np.diag(m)).reshape(grid.shape) / grid.cell_volume


def _anti(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (a @ b + b @ a)


def verify_moment_equations(H: HamiltonianSpec, rho: DensityMatrix, dt: float,
                            propagator: ExactPropagator | None = None) -> MomentReport:
    """Centered-difference time derivatives of the density and current moments
    against the commutator expressions evaluated at the current time."""
    grid, hbar = rho.grid, rho.hbar
    if grid.boundary != "periodic":
        raise GridError("moment equations need a periodic grid")
    prop = propagator or ExactPropagator(H, grid, hbar)
    plus, minus = prop(rho.matrix, dt), prop(rho.matrix, -dt)
    m = rho.matrix
    X = grid.mesh()
    A = H.A(X).reshape(grid.dim, -1)
    P = [momentum_matrix(grid, hbar, a) for a in range(grid.dim)]
    V = [sum(H.metric[a, b] * (P[b] + np.diag(A[b])) for b in range(grid.dim)) for a in range(grid.dim)]
    rho_dot = (1j / hbar) * (m @ prop.matrix - prop.matrix @ m)

    lhs_n = (_diag_density(plus, grid) - _diag_density(minus, grid)) / (2.0 * dt)
    rhs_n = np.zeros(grid.shape)
    for a in range(grid.dim):
        rhs_n -= derivative(_diag_density(_anti(m, V[a]), grid), grid, a)
    current_gap = 0.0
    for a in range(grid.dim):
        lhs_j = (_diag_density(_anti(plus, P[a]), grid) - _diag_density(_anti(minus, P[a]), grid)) / (2.0 * dt)
        rhs_j = _diag_density(_anti(rho_dot, P[a]), grid)
        current_gap = max(current_gap, float(np.max(np.abs(lhs_j - rhs_j))))
    ehrenfest = 0.0
    for a in range(grid.dim):
        moved = float(np.sum(X[a] * lhs_n) * grid.cell_volume)
        speed = float(np.real(np.trace(m @ V[a])))
        ehrenfest = max(ehrenfest, abs(moved - speed))
    report = MomentReport(float(np.max(np.abs(lhs_n - rhs_n))), current_gap, ehrenfest, dt)
    logger.debug("moment residuals at dt=%g: density %.3e current %.3e", dt,
                 report.density_residual, report.current_residual)
    return report


def picture_gap(H: HamiltonianSpec, F: OperatorRep, psi0: WaveFunction, t: float,
                dt: float | None = None) -> tuple[float, float]:
    """Heisenberg and Schrodinger expectations of ``F`` at time ``t``, same propagator."""
    grid = psi0.grid
    steps, step = _schedule(t, dt if dt is not None else default_quantum_dt(H, grid, psi0.hbar))
    prop = SplitStepPropagator(H, grid, psi0.hbar, step)
    U = np.eye(grid.node_count, dtype=complex)
    psi = psi0.values.ravel()
    for _ in range(steps):
        U = prop.apply(U)
        psi = prop.apply(psi)
    v0 = psi0.values.ravel()
    F_t = U.conj().T @ F.matrix @ U
    heisenberg = np.vdot(v0, F_t @ v0) * grid.cell_volume
    schrodinger = np.vdot(psi, F.matrix @ psi) * grid.cell_volume
    return float(np.real(heisenberg)), float(np.real(schrodinger))


def heisenberg_expectation(H: HamiltonianSpec, F: OperatorRep, psi0: WaveFunction, t: float,
                           dt: float | None = None, tolerance: float = 1e-9) -> float:
    heisenberg, schrodinger = picture_gap(H, F, psi0, t, dt)
    gap = abs(heisenberg - schrodinger)
    if gap > tolerance:
        raise PictureMismatchError(gap, tolerance)
    return heisenberg


# ---------------------------------------------------------------------------
# Madelung fields and continuity
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MadelungFields:
    density: ScalarField
    momentum: CovectorField
    mask: np.ndarray
    masked: int


def madelung_fields(psi: WaveFunction, node_floor: float = 1e-8, phase_factor: float = 2.0) -> MadelungFields:
    """``rho = |psi|^2`` and ``p = hbar grad(arg psi)``; nodes below the floor are NaN."""
    grid = psi.grid
    amp = np.abs(psi.values)
    mask = amp > node_floor * float(np.max(amp))
    if not np.any(mask):
        raise NodeFloorError("every node is below the node floor", masked=int(amp.size))
    if np.all(mask):
        eta = SynchronicityField.from_wave_phase(grid, psi.values, psi.hbar, phase_factor)
        momentum = momentum_of_synchronicity(eta).values
    else:
        safe = np.where(mask, amp, 1.0) ** 2
        comps = []
        for a in range(grid.dim):
            dpsi = derivative(psi.values, grid, a, parity="odd")
            comps.append(np.where(mask, psi.hbar * np.imag(np.conj(psi.values) * dpsi) / safe, np.nan))
        momentum = np.stack(comps)
    masked = int(mask.size - np.count_nonzero(mask))
    if masked:
        logger.info("[quantum] %d nodes below the node floor were masked", masked)
    return MadelungFields(ScalarField(grid, amp ** 2), CovectorField(grid, momentum), mask, masked)


def continuity_residual(H: HamiltonianSpec, psi: WaveFunction, dt: float, node_floor: float = 1e-8) -> float:
    """``d|psi|^2/dt + div(h (p + A) |psi|^2)`` on the Madelung mask."""
    grid = psi.grid
    forward = SplitStepPropagator(H, grid, psi.hbar, dt)(psi).density()
    backward = SplitStepPropagator(H, grid, psi.hbar, -dt)(psi).density()
    lhs = (forward - backward) / (2.0 * dt)
    fields = madelung_fields(psi, node_floor)
    rho = fields.density.values
    q = np.nan_to_num(fields.momentum.values) + H.A(grid.mesh())
    v = np.einsum("ij,j...->i...", H.metric, q)
    rhs = np.zeros(grid.shape)
    for a in range(grid.dim):
        rhs -= np.real(derivative(v[a] * rho, grid, a, parity="odd"))
    return float(np.max(np.abs(lhs - rhs)[fields.mask]))


# ---------------------------------------------------------------------------
# box states
# ---------------------------------------------------------------------------

def box_eigenstates(grid: ConfigGrid, n_max: int, hbar: float = 1.0) -> list[WaveFunction]:
    """``sqrt(2/L) sin(n pi (x - lo) / L)`` for ``n = 1..n_max``."""
    if grid.boundary != "box-doubled" or grid.dim != 1:
        raise GridError("box eigenstates need a 1-D box-doubled grid")
    n_points = grid.points[0]
    if not 1 <= n_max < n_points:
        raise BandwidthError(f"n_max={n_max} exceeds the grid bandwidth ({n_points - 1})")
    lo = grid.extents[0][0]
    L = grid.lengths[0]
    x = grid.axis(0)
    return [WaveFunction(grid, math.sqrt(2.0 / L) * np.sin(n * np.pi * (x - lo) / L), hbar)
            for n in range(1, n_max + 1)]


def wall_values(psi: WaveFunction) -> np.ndarray:
    """Sine-series interpolant of a box state evaluated at both walls."""
    grid = psi.grid
    n = grid.points[0]
    coeffs = (sfft.dst(psi.values.real, type=2, norm="ortho")
              + 1j * sfft.dst(psi.values.imag, type=2, norm="ortho"))
    scale = np.full(n, math.sqrt(2.0 / n))
    scale[-1] /= math.sqrt(2.0)
    modes = np.arange(1, n + 1)
    walls = np.array([0.0, 1.0])
    basis = np.sin(np.pi * np.outer(walls, modes)) * scale[None, :]
    return basis @ coeffs


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def _displacement(grid: ConfigGrid, x0) -> np.ndarray:
    X = grid.mesh()
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (grid.dim,))
    out = np.empty_like(X)
    for a in range(grid.dim):
        d = X[a] - x0[a]
        if grid.boundary == "periodic":
            L = grid.lengths[a]
            d = np.mod(d + 0.5 * L, L) - 0.5 * L
        out[a] = d
    return out


def coherent_state(grid: ConfigGrid, x0, p0, hbar: float = 1.0, omega: float = 1.0) -> WaveFunction:
    """Minimum-uncertainty packet ``exp(-omega (x-x0)^2 / (2 hbar) + i p0 (x-x0) / hbar)``."""
    d = _displacement(grid, x0)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (grid.dim,))
    exponent = -0.5 * omega * np.sum(d ** 2, axis=0) / hbar + 1j * np.einsum("a,a...->...", p0, d) / hbar
    return WaveFunction(grid, np.exp(exponent), hbar).normalized()


def harmonic_ground_state(grid: ConfigGrid, hbar: float = 1.0, omega: float = 1.0) -> WaveFunction:
    return coherent_state(grid, np.zeros(grid.dim), np.zeros(grid.dim), hbar, omega)


def periodic_gaussian(grid: ConfigGrid, x0, p0, hbar: float = 1.0) -> WaveFunction:
    """Packet of width ``sqrt(hbar)`` used for the classical limit."""
    return coherent_state(grid, x0, p0, hbar, omega=1.0)


def plane_wave(grid: ConfigGrid, mode, hbar: float = 1.0) -> WaveFunction:
    """``exp(i k x) / sqrt(V)`` with ``k = 2 pi mode / L`` per axis."""
    if grid.boundary != "periodic":
        raise GridError("plane waves need a periodic grid")
    X = grid.mesh()
    mode = np.broadcast_to(np.asarray(mode, dtype=float), (grid.dim,))
    phase = sum(2.0 * np.pi * mode[a] * (X[a] - grid.extents[a][0]) / grid.lengths[a] for a in range(grid.dim))
    volume = float(np.prod(grid.lengths))
    return WaveFunction(grid, np.exp(1j * phase) / math.sqrt(volume), hbar)


def modulated_phase_state(grid: ConfigGrid, mode: int, amplitude: float, x0: float = 0.0,
                          hbar: float = 1.0) -> tuple[WaveFunction, np.ndarray]:
    """Unit-modulus state with phase ``k x + (a/hbar) sin(x - x0)`` on a 1-D periodic grid.

    Returns the state and its analytic momentum ``hbar k + a cos(x - x0)``.
    """
    if grid.boundary != "periodic" or grid.dim != 1:
        raise GridError("modulated phase states need a 1-D periodic grid")
    L = grid.lengths[0]
    k = 2.0 * np.pi * mode / L
    x = grid.axis(0)
    phase = k * (x - grid.extents[0][0]) + amplitude / hbar * np.sin(2.0 * np.pi * (x - x0) / L)
    momentum = hbar * k + amplitude * 2.0 * np.pi / L * np.cos(2.0 * np.pi * (x - x0) / L)
    return WaveFunction(grid, np.exp(1j * phase) / math.sqrt(L), hbar), momentum


def random_low_band_state(grid: ConfigGrid, band: int = 4, seed: int = 0, hbar: float = 1.0) -> WaveFunction:
    if grid.boundary != "periodic" or grid.dim != 1:
        raise GridError("random low-band states need a 1-D periodic grid")
    if band >= grid.points[0] // 2:
        raise BandwidthError(f"band {band} is beyond the grid bandwidth")
    rng = np.random.default_rng(seed)
    modes = np.arange(-band, band + 1)
    coeffs = rng.normal(size=modes.size) + 1j * rng.normal(size=modes.size)
    x = grid.axis(0) - grid.extents[0][0]
    values = np.exp(1j * 2.0 * np.pi * np.outer(x, modes) / grid.lengths[0]) @ coeffs
    return WaveFunction(grid, values, hbar).normalized()


# ---------------------------------------------------------------------------
# charges and the classical limit
# ---------------------------------------------------------------------------

def charge_expectation(Q: ChargeSpec, psi: WaveFunction) -> float:
    """Matrix-free ``<psi| Q |psi>`` with the linear part symmetrized."""
    grid = psi.grid
    if grid.boundary != "periodic":
        raise GridError("charge expectations need a periodic grid")
    X = grid.mesh()
    hbar = psi.hbar

    def p(values, a):
        return -1j * hbar * derivative(values, grid, a)

    v = psi.values
    out = Q.C(X) * v
    B = Q.B(X)
    for a in range(grid.dim):
        out = out + 0.5 * (B[a] * p(v, a) + p(B[a] * v, a))
        for b in range(grid.dim):
            if Q.quadratic[a, b] != 0:
                out = out + Q.quadratic[a, b] * p(p(v, b), a)
    return float(np.real(np.sum(np.conj(v) * out)) * grid.cell_volume)


def charge_drift(H: HamiltonianSpec, Q: ChargeSpec, psi: WaveFunction, T: float,
                 dt: float | None = None) -> float:
    """Largest change of ``<Q>`` per unit time along the split-step evolution."""
    steps, step = _schedule(T, dt if dt is not None else default_quantum_dt(H, psi.grid, psi.hbar))
    prop = SplitStepPropagator(H, psi.grid, psi.hbar, step)
    q0 = charge_expectation(Q, psi)
    worst = 0.0
    for _ in range(steps):
        psi = prop(psi)
        worst = max(worst, abs(charge_expectation(Q, psi) - q0))
    return worst / abs(T) if T else 0.0


@dataclass
class ClassicalLimitReport:
    hbars: list[float]
    deviations: list[float]
    orders: list[float]

    @property
    def min_order(self) -> float:
        return min(self.orders) if self.orders else math.inf


def classical_limit_deviation(H: HamiltonianSpec, grid: ConfigGrid, x0, p0, hbars: Sequence[float],
                              T: float, dt: float | None = None) -> ClassicalLimitReport:
    """Max over ``[0, T]`` of ``|<x>(t) - x_cl(t)|`` for each hbar; the reference
    trajectory uses the same time step as the quantum run."""
    deviations = []
    for hbar in hbars:
        psi = periodic_gaussian(grid, x0, p0, hbar)
        steps, step = _schedule(T, dt if dt is not None else default_quantum_dt(H, grid, hbar))
        prop = SplitStepPropagator(H, grid, hbar, step)
        x, p = as_points(x0, grid.dim).astype(float), as_points(p0, grid.dim).astype(float)
        worst = 0.0
        for _ in range(steps):
            psi = prop(psi)
            x, p = step_characteristics(H, (x, p), step)
            worst = max(worst, float(np.max(np.abs(psi.position_mean() - x.ravel()))))
        logger.info("[quantum] classical limit hbar=%g deviation=%.4e", hbar, worst)
        deviations.append(worst)
    orders = [math.log(d0 / d1) / math.log(h0 / h1)
              for d0, d1, h0, h1 in zip(deviations, deviations[1:], hbars, hbars[1:])
              if d0 > 0 and d1 > 0]
    return ClassicalLimitReport(list(hbars), deviations, orders)
