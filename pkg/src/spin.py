"""
Angular momentum and spin operators on the sphere.

Fields of spin weight ``s`` (0 or 1/2) are sampled on a SphereGrid; the third
Euler angle is never gridded, ``d/dchi`` acts as multiplication by ``i s``.
With that rule the body-frame operators reduce to

    L1 = i hbar ( sin(phi) d_theta + cot(theta) cos(phi) d_phi)
    L2 = i hbar (-cos(phi) d_theta + cot(theta) sin(phi) d_phi)
    L3 = -i hbar d_phi
    S1 = L1 + hbar s cos(phi) / sin(theta)
    S2 = L2 + hbar s sin(phi) / sin(theta)
    S3 = L3

and ``S+- = S1 +- i S2``. Gauss-Legendre nodes never touch the poles.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import expm

from src.errors import GridError, QuadratureLeakError, StateError
from src.grids import SphereGrid, integrate_values, make_sphere_grid, map_chunks, sphere_derivative, spin_harmonic

logger = logging.getLogger(__name__)

KINDS = ("L1", "L2", "L3", "L+", "L-", "L2sum", "S1", "S2", "S3", "S+", "S-", "S2sum")
# printed names of the Casimirs
ALIASES = {"L²": "L2sum", "LL": "L2sum", "S²": "S2sum", "SS": "S2sum", "S−": "S-", "L−": "L-"}
LEAK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SpinField:
    grid: SphereGrid
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise GridError(f"sphere field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise StateError("sphere field has non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def spin_weight(self) -> float:
        return self.grid.spin_weight

    def inner(self, other: "SpinField") -> complex:
        return complex(integrate_values(np.conj(self.values) * other.values, self.grid))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def normalized(self) -> "SpinField":
        return SpinField(self.grid, self.values / self.norm(), self.hbar)

    def with_values(self, values: np.ndarray) -> "SpinField":
        return SpinField(self.grid, values, self.hbar)


@dataclass(frozen=True)
class SpinOperator:
    kind: str
    hbar: float = 1.0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise StateError(f"unknown angular operator '{self.kind}'")
        object.__setattr__(self, "kind", kind)


@dataclass(frozen=True, eq=False)
class SpinMatrixRep:
    basis: list
    matrix: np.ndarray
    leak: float = 0.0

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def _components(values: np.ndarray, grid: SphereGrid, hbar: float, spin: bool) -> list[np.ndarray]:
    theta, phi = grid.mesh()
    d_theta = sphere_derivative(values, grid, "theta")
    d_phi = sphere_derivative(values, grid, "phi")
    cot = np.cos(theta) / np.sin(theta)
    one = 1j * hbar * (np.sin(phi) * d_theta + cot * np.cos(phi) * d_phi)
    two = 1j * hbar * (-np.cos(phi) * d_theta + cot * np.sin(phi) * d_phi)
    three = -1j * hbar * d_phi
    if spin and grid.spin_weight:
        s = grid.spin_weight
        one = one + hbar * s * np.cos(phi) / np.sin(theta) * values
        two = two + hbar * s * np.sin(phi) / np.sin(theta) * values
    return [one, two, three]


def _apply(kind: str, values: np.ndarray, grid: SphereGrid, hbar: float) -> np.ndarray:
    spin = kind.startswith("S")
    base = kind[1:]
    if base == "2sum":
        out = np.zeros_like(values)
        first = _components(values, grid, hbar, spin)
        for j in range(3):
            out = out + _components(first[j], grid, hbar, spin)[j]
        return out
    one, two, three = _components(values, grid, hbar, spin)
    return {"1": one, "2": two, "3": three, "+": one + 1j * two, "-": one - 1j * two}[base]


def apply_angular_operator(op: SpinOperator, f: SpinField) -> SpinField:
    """Apply ``op`` with spectral theta/phi derivatives.

    Spin-family operators on weight-0 fields coincide with the orbital ones;
    orbital operators on weight-1/2 fields omit the ``1/sin(theta)`` terms.
    """
    return f.with_values(_apply(op.kind, f.values, f.grid, op.hbar))


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def _half_grid(grid: SphereGrid) -> None:
    if grid.spin_weight != 0.5:
        raise GridError("half-spin states live on a spin-weight 1/2 grid")


def plus_state(grid: SphereGrid, hbar: float = 1.0) -> SpinField:
    """``|+> = exp(i phi/2) cos(theta/2) / sqrt(2 pi)``."""
    _half_grid(grid)
    theta, phi = grid.mesh()
    return SpinField(grid, np.exp(0.5j * phi) * np.cos(0.5 * theta) / math.sqrt(2.0 * math.pi), hbar)


def minus_state(grid: SphereGrid, hbar: float = 1.0) -> SpinField:
    """``|-> = exp(-i phi/2) sin(theta/2) / sqrt(2 pi)``."""
    _half_grid(grid)
    theta, phi = grid.mesh()
    return SpinField(grid, np.exp(-0.5j * phi) * np.sin(0.5 * theta) / math.sqrt(2.0 * math.pi), hbar)


def harmonic_state(l: int, m: int, grid: SphereGrid, hbar: float = 1.0) -> SpinField:
    if grid.spin_weight != 0:
        raise GridError("spherical harmonics are weight-0 fields")
    if abs(m) > l or l > grid.l_max:
        raise StateError(f"Y_{l}^{m} is not representable with l_max={grid.l_max}")
    return SpinField(grid, spin_harmonic(l, m, grid), hbar)


def half_spin_state(l: int, m: int, grid: SphereGrid, hbar: float = 1.0) -> SpinField:
    """``|l+1/2, m+1/2>`` from ``sqrt((l+m+1)/(2l+1)) Y_l^m |+> + sqrt((l-m)/(2l+1)) Y_l^{m+1} |->``."""
    _half_grid(grid)
    if not -l - 1 <= m <= l or l + 1 > grid.l_max:
        raise StateError(f"no half-spin state for l={l}, m={m} with l_max={grid.l_max}")
    plus, minus = plus_state(grid, hbar).values, minus_state(grid, hbar).values
    values = np.zeros(grid.shape, dtype=complex)
    if m >= -l:
        values += math.sqrt((l + m + 1) / (2 * l + 1)) * spin_harmonic(l, m, grid) * plus
    if m + 1 <= l:
        values += math.sqrt((l - m) / (2 * l + 1)) * spin_harmonic(l, m + 1, grid) * minus
    return SpinField(grid, values, hbar).normalized()


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

@dataclass
class EigenResult:
    casimir: float
    z_component: float
    casimir_residual: float
    z_residual: float


def spin_eigencheck(state: SpinField) -> EigenResult:
    """Rayleigh quotients of the Casimir and the third component, with residual norms."""
    family = "S" if state.spin_weight else "L"
    f = state.normalized()
    square = apply_angular_operator(SpinOperator(f"{family}2sum", f.hbar), f)
    third = apply_angular_operator(SpinOperator(f"{family}3", f.hbar), f)
    casimir = f.inner(square).real
    z = f.inner(third).real
    return EigenResult(
        casimir=casimir, z_component=z,
        casimir_residual=f.with_values(square.values - casimir * f.values).norm(),
        z_residual=f.with_values(third.values - z * f.values).norm())


def operator_matrix(op: SpinOperator, basis: Sequence[SpinField]) -> SpinMatrixRep:
    """``<b_i|op|b_j>`` plus the norm of what leaves ``span(basis)``."""
    images = [apply_angular_operator(op, b) for b in basis]
    matrix = np.array([[bi.inner(img) for img in images] for bi in basis])
    leak = 0.0
    for j, img in enumerate(images):
        rest = img.values - sum(matrix[i, j] * basis[i].values for i in range(len(basis)))
        leak = max(leak, img.with_values(rest).norm())
    return SpinMatrixRep(list(basis), matrix, leak)


PAULI = {
    "sigma1": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma2": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sigma3": np.array([[1, 0], [0, -1]], dtype=complex),
    "sigma+": np.array([[0, 1], [0, 0]], dtype=complex),
    "sigma-": np.array([[0, 0], [1, 0]], dtype=complex),
}


@dataclass
class PauliResult:
    sigmas: dict[str, np.ndarray]
    deviation: float
    leak: float


def pauli_reconstruct(l_max: int = 6, hbar: float = 1.0, leak_tol: float = LEAK_TOL) -> PauliResult:
    """Pauli matrices from the quadrature matrix elements in ``{|+>, |->}``.

    ``sigma_j = (2/hbar) S_j`` and ``sigma+- = S+- / hbar``, so that
    ``sigma+ sigma- + sigma- sigma+ = 1``.
    """
    grid = make_sphere_grid(l_max, 0.5)
    basis = [plus_state(grid, hbar), minus_state(grid, hbar)]
    sigmas = {}
    leak = 0.0
    for kind, name, scale in (("S1", "sigma1", 2.0), ("S2", "sigma2", 2.0), ("S3", "sigma3", 2.0),
                              ("S+", "sigma+", 1.0), ("S-", "sigma-", 1.0)):
        rep = operator_matrix(SpinOperator(kind, hbar), basis)
        leak = max(leak, rep.leak)
        sigmas[name] = scale / hbar * rep.matrix
    if leak > leak_tol:
        raise QuadratureLeakError(leak, leak_tol)
    deviation = max(float(np.max(np.abs(sigmas[k] - PAULI[k]))) for k in PAULI)
    return PauliResult(sigmas, deviation, leak)


@dataclass
class LadderResult:
    raising: complex
    lowering: complex
    hbar: float


def ladder_constant(l_max: int = 6, hbar: float = 1.0) -> LadderResult:
    """Measured constants in ``S+|-> = c|+>`` and ``S-|+> = c|->``."""
    grid = make_sphere_grid(l_max, 0.5)
    plus, minus = plus_state(grid, hbar), minus_state(grid, hbar)
    raising = plus.inner(apply_angular_operator(SpinOperator("S+", hbar), minus))
    lowering = minus.inner(apply_angular_operator(SpinOperator("S-", hbar), plus))
    if abs(raising - 1.0) > 1e-8:
        logger.warning("[spin] S+|-> = %.6g |+>: the ladder relation without hbar holds only for hbar = 1",
                       raising.real)
    return LadderResult(raising, lowering, hbar)


def _weight_zero_probes(grid: SphereGrid, count: int, seed: int) -> list[SpinField]:
    rng = np.random.default_rng(seed)
    top = grid.l_max // 2
    modes = [(l, m) for l in range(top + 1) for m in range(-l, l + 1)]
    probes = []
    for _ in range(count):
        c = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
        values = sum(ci * spin_harmonic(l, m, grid) for ci, (l, m) in zip(c, modes))
        probes.append(SpinField(grid, values).normalized())
    return probes


def _weight_half_probes(grid: SphereGrid, count: int, seed: int) -> list[SpinField]:
    rng = np.random.default_rng(seed)
    top = max(grid.l_max // 2 - 1, 0)
    plus, minus = plus_state(grid).values, minus_state(grid).values
    modes = [(l, m, spinor) for l in range(top + 1) for m in range(-l, l + 1) for spinor in (plus, minus)]
    probes = []
    for _ in range(count):
        c = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
        values = sum(ci * spin_harmonic(l, m, grid) * spinor for ci, (l, m, spinor) in zip(c, modes))
        probes.append(SpinField(grid, values).normalized())
    return probes


def make_probes(grid: SphereGrid, count: int = 10, seed: int = 0) -> list[SpinField]:
    """Random band-limited probes (``l <= l_max/2``) of the grid's spin weight."""
    if grid.spin_weight:
        return _weight_half_probes(grid, count, seed)
    return _weight_zero_probes(grid, count, seed)


def _with_hbar(probes: Sequence[SpinField], hbar: float) -> list[SpinField]:
    return [SpinField(p.grid, p.values, hbar) for p in probes]


def commutator_table(l_max: int = 8, hbar: float = 1.0, probes: Sequence[SpinField] | None = None,
                     seed: int = 0) -> pd.DataFrame:
    """``max_f |[O_i, O_j] f - i hbar eps_ijk O_k f|`` for the L and S families and ``[S.S, S3]``.

    ``probes`` (if given) must mix weight-0 and weight-1/2 fields; otherwise
    ten random probes of each weight are drawn.
    """
    if probes is None:
        probes = (make_probes(make_sphere_grid(l_max, 0.0), seed=seed)
                  + make_probes(make_sphere_grid(l_max, 0.5), seed=seed))
    probes = _with_hbar(probes, hbar)
    families = {"L": [p for p in probes if p.spin_weight == 0], "S": [p for p in probes if p.spin_weight]}
    rows = []
    for family, fields in families.items():
        if not fields:
            continue
        for i, j, k in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
            a, b, c = (SpinOperator(f"{family}{n}", hbar) for n in (i, j, k))

            def residual(chunk, a=a, b=b, c=c):
                worst = 0.0
                for f in chunk:
                    ab = apply_angular_operator(a, apply_angular_operator(b, f)).values
                    ba = apply_angular_operator(b, apply_angular_operator(a, f)).values
                    target = 1j * hbar * apply_angular_operator(c, f).values
                    worst = max(worst, f.with_values(ab - ba - target).norm())
                return worst

            rows.append({"family": family, "commutator": f"[{a.kind},{b.kind}]",
                         "residual": max(map_chunks(residual, fields))})
        casimir, third = SpinOperator(f"{family}2sum", hbar), SpinOperator(f"{family}3", hbar)
        worst = 0.0
        for f in fields:
            ab = apply_angular_operator(casimir, apply_angular_operator(third, f)).values
            ba = apply_angular_operator(third, apply_angular_operator(casimir, f)).values
            worst = max(worst, f.with_values(ab - ba).norm())
        rows.append({"family": family, "commutator": f"[{family}.{family},{family}3]", "residual": worst})
    table = pd.DataFrame(rows, columns=["family", "commutator", "residual"])
    logger.debug("commutator table:\n%s", table.to_string(index=False))
    return table


def hermiticity_residuals(l_max: int = 8, hbar: float = 1.0, seed: int = 0) -> dict[str, float]:
    """``max |<f|O g> - conj(<g|O f>)|`` over pairs of random probes, per operator."""
    out = {}
    for weight, kinds in ((0.0, ("L1", "L2", "L3")), (0.5, ("S1", "S2", "S3"))):
        probes = _with_hbar(make_probes(make_sphere_grid(l_max, weight), seed=seed), hbar)
        for kind in kinds:
            op = SpinOperator(kind, hbar)
            images = [apply_angular_operator(op, p) for p in probes]
            worst = 0.0
            for (f, of), (g, og) in itertools.combinations(zip(probes, images), 2):
                worst = max(worst, abs(f.inner(og) - np.conj(g.inner(of))))
            out[kind] = worst
    return out


def ladder_consistency(l_max: int = 8, hbar: float = 1.0, seed: int = 0) -> float:
    """``|S+- f - (S1 +- i S2) f|`` with the components applied separately."""
    worst = 0.0
    for f in _with_hbar(make_probes(make_sphere_grid(l_max, 0.5), seed=seed), hbar):
        one = apply_angular_operator(SpinOperator("S1", hbar), f).values
        two = apply_angular_operator(SpinOperator("S2", hbar), f).values
        for kind, sign in (("S+", 1.0), ("S-", -1.0)):
            direct = apply_angular_operator(SpinOperator(kind, hbar), f).values
            worst = max(worst, f.with_values(direct - (one + sign * 1j * two)).norm())
    return worst


def rotor_hamiltonian_expectation(B: Sequence[float], I: float, state: SpinField) -> float:
    """``<S.S / I + 1/2 (S.B + B.S)>``; for a constant field the last term is ``B.S``."""
    if not I > 0:
        raise StateError(f"moment of inertia must be positive, got {I}")
    f = state.normalized()
    family = "S" if f.spin_weight else "L"
    value = f.inner(apply_angular_operator(SpinOperator(f"{family}2sum", f.hbar), f)).real / I
    for j, b in enumerate(B, start=1):
        if b:
            value += b * f.inner(apply_angular_operator(SpinOperator(f"{family}{j}", f.hbar), f)).real
    return float(value)


@dataclass
class LarmorResult:
    series: pd.DataFrame
    deviation: float


def larmor_precession(B1: float, times: Sequence[float], I: float = 1.0, hbar: float = 1.0,
                      l_max: int = 6) -> LarmorResult:
    """Evolve ``|+>`` under the rotor Hamiltonian with ``B = (B1, 0, 0)`` inside the Pauli block."""
    grid = make_sphere_grid(l_max, 0.5)
    basis = [plus_state(grid, hbar), minus_state(grid, hbar)]
    casimir = operator_matrix(SpinOperator("S2sum", hbar), basis).matrix
    s1 = operator_matrix(SpinOperator("S1", hbar), basis).matrix
    s3 = operator_matrix(SpinOperator("S3", hbar), basis).matrix
    block = casimir / I + B1 * s1
    psi0 = np.array([1.0, 0.0], dtype=complex)
    rows = []
    for t in times:
        psi = expm(-1j * block * t / hbar) @ psi0
        rows.append({"t": float(t), "s3": float(np.real(np.vdot(psi, s3 @ psi))),
                     "expected": 0.5 * hbar * math.cos(B1 * t)})
    series = pd.DataFrame(rows, columns=["t", "s3", "expected"])
    deviation = float(np.max(np.abs(series["s3"] - series["expected"]))) if rows else 0.0
    return LarmorResult(series, deviation)
