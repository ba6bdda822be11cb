"""
Discretized domains, fields on them, quadrature and derivative kernels.

Boundary kinds for configuration grids:

- ``periodic``: nodes ``lo + i*h`` with ``h = L/N``; FFT derivatives.
- ``box-doubled``: cell-centered nodes ``lo + (i + 1/2)*h``; a field is extended
  even or odd to a periodic grid of ``2N`` nodes before the FFT, so odd fields
  vanish at the walls.
- ``open``: nodes ``lo + i*h`` with ``h = L/(N - 1)``; fourth-order finite
  differences with one-sided stencils at the two edges.

Spherical grids use Gauss-Legendre colatitudes (poles excluded) times uniform
azimuths. Spin weight 1/2 fields are stored without the chi fiber; the weight
only enters through the azimuthal mode numbers ``m = k + s``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import linalg
from scipy.integrate import trapezoid
from scipy.special import eval_jacobi, roots_legendre, sph_harm_y

from src.errors import GridError, NodeFloorError, StateError

logger = logging.getLogger(__name__)

BOUNDARIES = ("periodic", "box-doubled", "open")
MIN_POINTS = 8
THREADS_ENV = "PHASEFLOW_THREADS"


# ---------------------------------------------------------------------------
# configuration and phase grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigGrid:
    dim: int
    extents: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    boundary: str = "periodic"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def node_count(self) -> int:
        return int(np.prod(self.points))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.extents)

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.boundary == "open":
            return tuple(L / (n - 1) for L, n in zip(self.lengths, self.points))
        return tuple(L / n for L, n in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def doubled_lengths(self) -> tuple[float, ...]:
        """Period seen by the FFT: 2L on box-doubled grids, L otherwise."""
        if self.boundary == "box-doubled":
            return tuple(2.0 * L for L in self.lengths)
        return self.lengths

    def axis(self, a: int) -> np.ndarray:
        lo, _ = self.extents[a]
        i = np.arange(self.points[a], dtype=float)
        if self.boundary == "box-doubled":
            return lo + (i + 0.5) * self.spacing[a]
        return lo + i * self.spacing[a]

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.axis(a) for a in range(self.dim))

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *points)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def wavenumbers(self, a: int) -> np.ndarray:
        """Angular wavenumbers of the FFT used along axis ``a`` (doubled on boxes)."""
        n = self.points[a] * (2 if self.boundary == "box-doubled" else 1)
        return 2.0 * np.pi * sfft.fftfreq(n, d=self.spacing[a])

    def scheme(self, parity: str = "even") -> str:
        if self.boundary == "periodic":
            return "periodic"
        if self.boundary == "open":
            return "open"
        return parity


def _per_axis(value, dim: int, name: str) -> tuple:
    if np.ndim(value) == 0:
        return (value,) * dim
    seq = tuple(value)
    if len(seq) != dim:
        raise GridError(f"{name} needs {dim} entries, got {len(seq)}")
    return seq


def _extent_pairs(extents, dim: int) -> tuple[tuple[float, float], ...]:
    arr = np.asarray(extents, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise GridError(f"extents must be one (lo, hi) pair or {dim} pairs")
    if not np.all(np.isfinite(arr)):
        raise GridError("extents must be finite")
    return tuple((float(lo), float(hi)) for lo, hi in arr)


def make_uniform_grid(dim: int, extents, points, boundary: str = "periodic") -> ConfigGrid:
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if boundary not in BOUNDARIES:
        raise GridError(f"unknown boundary '{boundary}' (expected one of {', '.join(BOUNDARIES)})")
    pairs = _extent_pairs(extents, dim)
    for lo, hi in pairs:
        if not hi > lo:
            raise GridError(f"non-positive extent [{lo}, {hi}]")
    counts = tuple(int(n) for n in _per_axis(points, dim, "points"))
    for n in counts:
        if n < MIN_POINTS:
            raise GridError(f"points per axis must be >= {MIN_POINTS}, got {n}")
    grid = ConfigGrid(dim=dim, extents=pairs, points=counts, boundary=boundary)
    logger.debug("grid %s points=%s spacing=%s", boundary, counts, grid.spacing)
    return grid


@dataclass(frozen=True)
class PhaseGrid:
    """Cotangent-bundle grid: configuration axes first, momentum axes after."""
    x: ConfigGrid
    p_extents: tuple[tuple[float, float], ...]
    p_points: tuple[int, ...]
    p_boundary: str = "periodic"

    @property
    def dim(self) -> int:
        return self.x.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x.points + self.p_points

    @property
    def p_center(self) -> tuple[float, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in self.p_extents)

    @property
    def p_spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.p_extents, self.p_points))

    @property
    def cell_volume(self) -> float:
        return self.x.cell_volume * float(np.prod(self.p_spacing))

    def p_axis(self, a: int) -> np.ndarray:
        n = self.p_points[a]
        return self.p_center[a] + (np.arange(n, dtype=float) - 0.5 * (n - 1)) * self.p_spacing[a]

    @cached_property
    def p_axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.p_axis(a) for a in range(self.dim))

    @property
    def spacings(self) -> tuple[float, ...]:
        return self.x.spacing + self.p_spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, P)``, each of shape ``(dim, *shape)``."""
        full = np.meshgrid(*self.x.axes, *self.p_axes, indexing="ij")
        return np.stack(full[: self.dim]), np.stack(full[self.dim:])

    def schemes(self) -> tuple[str, ...]:
        return (self.x.scheme(),) * self.dim + (self.p_boundary,) * self.dim


def make_phase_grid(x_grid: ConfigGrid, p_extents, p_points=None, p_center=None,
                    p_boundary: str = "periodic") -> PhaseGrid:
    """Momentum axes are cell-centered and symmetric about ``p_center``."""
    dim = x_grid.dim
    arr = np.asarray(p_extents, dtype=float)
    if arr.ndim == 0:
        arr = np.array([-float(arr), float(arr)])
    pairs = _extent_pairs(arr, dim)
    for lo, hi in pairs:
        if not hi > lo:
            raise GridError(f"non-positive momentum extent [{lo}, {hi}]")
    if p_center is not None:
        for (lo, hi), c in zip(pairs, _per_axis(p_center, dim, "p_center")):
            if abs(0.5 * (lo + hi) - c) > 1e-12 * (hi - lo):
                raise GridError(f"momentum axis [{lo}, {hi}] is not symmetric about {c}")
    counts = x_grid.points if p_points is None else tuple(int(n) for n in _per_axis(p_points, dim, "p_points"))
    for n in counts:
        if n < MIN_POINTS:
            raise GridError(f"p points per axis must be >= {MIN_POINTS}, got {n}")
    if p_boundary not in ("periodic", "open"):
        raise GridError(f"unknown momentum boundary '{p_boundary}'")
    return PhaseGrid(x=x_grid, p_extents=pairs, p_points=counts, p_boundary=p_boundary)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: ConfigGrid
    values: np.ndarray
    parity: str = "even"

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise GridError(f"value count {values.shape} does not match grid {self.grid.shape}")
        if self.parity not in ("even", "odd"):
            raise GridError(f"parity must be 'even' or 'odd', got {self.parity}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class CovectorField:
    grid: ConfigGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.dim,) + self.grid.shape:
            raise GridError(f"covector shape {values.shape} does not match grid {(self.grid.dim,) + self.grid.shape}")
        object.__setattr__(self, "values", values)

    def component(self, a: int) -> ScalarField:
        return ScalarField(self.grid, self.values[a])


@dataclass(frozen=True, eq=False)
class SynchronicityField:
    """Unit-modulus section ``eta = exp(i * phase_factor * phase)``; phase kept unwrapped."""
    grid: ConfigGrid
    phase: np.ndarray
    hbar: float = 1.0
    phase_factor: float = 2.0

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        if phase.shape != self.grid.shape:
            raise GridError(f"phase shape {phase.shape} does not match grid {self.grid.shape}")
        if not self.hbar > 0:
            raise StateError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "phase", phase)

    @property
    def values(self) -> np.ndarray:
        return np.exp(1j * self.phase_factor * self.phase)

    @classmethod
    def from_wave_phase(cls, grid: ConfigGrid, wave: np.ndarray, hbar: float = 1.0,
                        phase_factor: float = 2.0) -> "SynchronicityField":
        """Synchronicity carrying the (unwrapped) argument of a complex field."""
        return cls(grid, unwrap_phase(np.angle(wave)), hbar=hbar, phase_factor=phase_factor)


def unwrap_phase(angles: np.ndarray, residue_tol: float = 1e-6) -> np.ndarray:
    """1-D sequential unwrap; 2-D row-then-column, cross-checked against column-then-row."""
    angles = np.asarray(angles, dtype=float)
    if angles.ndim == 1:
        return np.unwrap(angles)
    rows_first = np.unwrap(np.unwrap(angles, axis=1), axis=0)
    cols_first = np.unwrap(np.unwrap(angles, axis=0), axis=1)
    residue = float(np.max(np.abs(rows_first - cols_first)))
    if residue > residue_tol:
        raise NodeFloorError(f"phase unwrapping is path dependent (residue {residue:.3e})")
    return rows_first


# ---------------------------------------------------------------------------
# derivative kernels
# ---------------------------------------------------------------------------

def _fd4(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(values, axis, 0)
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def _fft_derivative(values: np.ndarray, h: float, axis: int, order: int) -> np.ndarray:
    n = values.shape[axis]
    shape = [1] * values.ndim
    shape[axis] = -1
    if np.isrealobj(values):
        k = 2.0 * np.pi * sfft.rfftfreq(n, d=h)
        mult = (1j * k) ** order
        if order % 2 and n % 2 == 0:
            mult[-1] = 0.0
        spec = sfft.rfft(values, axis=axis) * mult.reshape(shape)
        return sfft.irfft(spec, n=n, axis=axis)
    k = 2.0 * np.pi * sfft.fftfreq(n, d=h)
    mult = (1j * k) ** order
    if order % 2 and n % 2 == 0:
        mult[n // 2] = 0.0
    return sfft.ifft(sfft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)


def extend(values: np.ndarray, axis: int, parity: str) -> np.ndarray:
    """Even/odd doubling of a cell-centered box field along ``axis``."""
    mirror = np.flip(values, axis=axis)
    if parity == "odd":
        mirror = -mirror
    return np.concatenate([values, mirror], axis=axis)


def axis_derivative(values: np.ndarray, h: float, axis: int, scheme: str, order: int = 1) -> np.ndarray:
    """Derivative along one array axis. ``scheme``: periodic, even, odd or open."""
    if scheme == "periodic":
        return _fft_derivative(values, h, axis, order)
    if scheme in ("even", "odd"):
        n = values.shape[axis]
        full = _fft_derivative(extend(values, axis, scheme), h, axis, order)
        return np.take(full, np.arange(n), axis=axis)
    if scheme == "open":
        out = values
        for _ in range(order):
            out = _fd4(out, h, axis)
        return out
    raise GridError(f"unknown derivative scheme '{scheme}'")


def derivative(values: np.ndarray, grid: ConfigGrid, axis: int, parity: str = "even",
               order: int = 1) -> np.ndarray:
    """Derivative along grid axis ``axis``; grid axes are the trailing array axes."""
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for a {grid.dim}-D grid")
    array_axis = np.ndim(values) - grid.dim + axis
    return axis_derivative(values, grid.spacing[axis], array_axis, grid.scheme(parity), order)


def flip_parity(parity: str) -> str:
    return "odd" if parity == "even" else "even"


def spectral_derivative(field: ScalarField, axis: int = 0) -> ScalarField:
    if not 0 <= axis < field.grid.dim:
        raise GridError(f"axis {axis} out of range for a {field.grid.dim}-D grid")
    if not np.all(np.isfinite(field.values)):
        raise StateError("field has non-finite values")
    values = derivative(field.values, field.grid, axis, field.parity)
    return ScalarField(field.grid, values, parity=flip_parity(field.parity))


def phase_gradient(phase: np.ndarray, grid: ConfigGrid, axis: int, phase_factor: float = 2.0) -> np.ndarray:
    """Gradient of an unwrapped phase.

    On periodic axes the linear ramp is removed first; its slope is rounded to a
    winding that keeps ``exp(i * phase_factor * phase)`` single valued.
    """
    h = grid.spacing[axis]
    if grid.boundary != "periodic":
        return axis_derivative(phase, h, axis, "open")
    n = grid.points[axis]
    rise = float(np.mean(np.take(phase, -1, axis=axis) - np.take(phase, 0, axis=axis))) * n / (n - 1)
    winding = round(phase_factor * rise / (2.0 * np.pi))
    slope = 2.0 * np.pi * winding / (phase_factor * grid.lengths[axis])
    shape = [1] * grid.dim
    shape[axis] = -1
    ramp = slope * (grid.axis(axis) - grid.extents[axis][0]).reshape(shape)
    return axis_derivative(phase - ramp, h, axis, "periodic") + slope


def momentum_of_synchronicity(eta: SynchronicityField) -> CovectorField:
    """``p = -i (hbar/2) eta^-1 d eta``, i.e. ``hbar`` times the phase gradient."""
    comps = [eta.hbar * phase_gradient(eta.phase, eta.grid, a, eta.phase_factor) for a in range(eta.grid.dim)]
    return CovectorField(eta.grid, np.stack(comps))


# ---------------------------------------------------------------------------
# spherical grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereGrid:
    l_max: int
    spin_weight: float = 0.0

    @property
    def n_theta(self) -> int:
        return self.l_max + 2

    @property
    def n_phi(self) -> int:
        return 2 * self.l_max + 4

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @cached_property
    def _legendre(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = roots_legendre(self.n_theta)
        order = np.argsort(-x)
        return x[order], w[order]

    @property
    def cos_theta(self) -> np.ndarray:
        return self._legendre[0]

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.cos_theta)

    @property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of ``sin(theta) dtheta dphi``, shape ``(n_theta, n_phi)``."""
        return np.outer(self._legendre[1], np.full(self.n_phi, 2.0 * np.pi / self.n_phi))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Azimuthal quantum numbers ``m = k + s`` of the FFT columns."""
        return np.rint(sfft.fftfreq(self.n_phi) * self.n_phi) + self.spin_weight

    @cached_property
    def carrier(self) -> np.ndarray:
        return np.exp(1j * self.spin_weight * self.phi)

    def _mode_derivative(self, m: float) -> np.ndarray:
        s = self.spin_weight
        a = int(round(abs(m + s)))
        b = int(round(abs(m - s)))
        top = int(round(self.l_max + s - 0.5 * (a + b)))
        n = self.n_theta
        if top < 0:
            return np.zeros((n, n))
        x = self.cos_theta
        half = 0.5 * self.theta
        w = np.cos(half) ** a * np.sin(half) ** b
        dw = w * (-0.5 * a * np.tan(half) + 0.5 * b / np.tan(half))
        ks = np.arange(top + 1)
        jac = eval_jacobi(ks[None, :], b, a, x[:, None])
        djac = np.zeros_like(jac)
        if top >= 1:
            lower = eval_jacobi(ks[None, 1:] - 1, b + 1, a + 1, x[:, None])
            djac[:, 1:] = 0.5 * (ks[1:] + a + b + 1) * lower
        basis = w[:, None] * jac
        dbasis = dw[:, None] * jac - (w * np.sin(self.theta))[:, None] * djac
        qw = self._legendre[1]
        scale = np.sqrt(np.sum(qw[:, None] * basis ** 2, axis=0))
        basis /= scale
        dbasis /= scale
        gram = basis.T @ (qw[:, None] * basis)
        project = linalg.solve(gram, basis.T * qw[None, :], assume_a="pos")
        return dbasis @ project

    @cached_property
    def theta_operators(self) -> np.ndarray:
        """Per-column colatitude derivative matrices, shape ``(n_phi, n_theta, n_theta)``."""
        return np.stack([self._mode_derivative(m) for m in self.mode_numbers])


def make_sphere_grid(l_max: int, spin_weight: float = 0.0) -> SphereGrid:
    if int(l_max) < 2:
        raise GridError(f"l_max must be >= 2, got {l_max}")
    if spin_weight not in (0, 0.0, 0.5):
        raise GridError(f"spin weight must be 0 or 1/2, got {spin_weight}")
    return SphereGrid(l_max=int(l_max), spin_weight=float(spin_weight))


def sphere_derivative(values: np.ndarray, grid: SphereGrid, wrt: str) -> np.ndarray:
    """Spectral derivative of a weight-s sphere field along ``theta`` or ``phi``."""
    spec = sfft.fft(values * np.conj(grid.carrier)[None, :], axis=-1)
    if wrt == "phi":
        mult = 1j * grid.mode_numbers
        mult[grid.n_phi // 2] = 0.0
        spec = spec * mult[None, :]
    elif wrt == "theta":
        spec = np.einsum("cij,jc->ic", grid.theta_operators, spec)
    else:
        raise GridError(f"unknown sphere coordinate '{wrt}'")
    return sfft.ifft(spec, axis=-1) * grid.carrier[None, :]


def spin_harmonic(l: int, m: int, grid: SphereGrid) -> np.ndarray:
    """Orthonormal ``Y_l^m`` (Condon-Shortley phase) sampled on the sphere nodes."""
    theta, phi = grid.mesh()
    return sph_harm_y(l, m, theta, phi)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def integrate_values(values: np.ndarray, grid) -> complex | float:
    if isinstance(grid, SphereGrid):
        return np.sum(grid.weights * values)
    if isinstance(grid, PhaseGrid):
        return np.sum(values) * grid.cell_volume
    if grid.boundary == "open":
        out = values
        for a in reversed(range(grid.dim)):
            out = trapezoid(out, dx=grid.spacing[a], axis=np.ndim(out) - grid.dim + a)
        return out
    return np.sum(values) * grid.cell_volume


def integrate(field) -> float | complex:
    """Quadrature consistent with the field's grid (rectangle, trapezoid or Gauss-Legendre)."""
    return integrate_values(field.values, field.grid)


# ---------------------------------------------------------------------------
# worker pool
# ---------------------------------------------------------------------------

def worker_count() -> int:
    raw = os.getenv(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        logger.warning("%s=%r is not an integer; using 1 thread", THREADS_ENV, raw)
        return 1
    return max(1, n)


def map_chunks(fn: Callable, items: Sequence, chunks: int | None = None) -> list:
    """Apply ``fn`` to contiguous slices of ``items``; results keep input order."""
    workers = worker_count()
    n = len(items)
    parts = chunks or workers
    bounds = [round(i * n / parts) for i in range(parts + 1)]
    slices = [items[bounds[i]:bounds[i + 1]] for i in range(parts) if bounds[i + 1] > bounds[i]]
    if workers == 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))
