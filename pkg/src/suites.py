"""
Execução das verificações de um cenário.

- run_checks(config) roda os checks da camada configurada e devolve um RunReport.
- Cada check vira uma ou mais linhas Check(name, value, tolerance, reason);
  pass = value <= tolerance, sem folga.
- Erros PhaseFlowError viram linha reprovada com value = inf e a mensagem em reason.
- Com dt = 0 (ou t_end = 0) os checks de evolução passam marcados 'degenerate'.
Uso:
    from src.scenario import parse_scenario
    from src.suites import run_checks
    report = run_checks(parse_scenario('spin-suite'))
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.classical import GaussianPacket, LiouvilleSolver, ParticleEnsemble, reference_density, \
    ensemble_charge_drift, verify_classical_equivalence
from src.errors import GridError, PhaseFlowError
from src.hamiltonian import angular_momentum_charge, charge_on_phase_grid, energy_charge, \
    hamiltonian_on_phase_grid, poisson_bracket
from src.quantum import MAX_BASIS, ExactPropagator, OperatorRep, SplitStepPropagator, box_eigenstates, charge_drift, \
    classical_limit_deviation, coherent_state, continuity_residual, hamiltonian_matrix, harmonic_ground_state, \
    madelung_fields, modulated_phase_state, periodic_gaussian, plane_wave, position_operator, \
    random_low_band_state, step_quantum_liouville, verify_moment_equations, wall_values
from src.scenario import ScenarioConfig, build_config_grid, build_hamiltonian_from, build_phase_grid, \
    build_sphere_grid
from src.spin import commutator_table, harmonic_state, hermiticity_residuals, ladder_consistency, \
    ladder_constant, larmor_precession, minus_state, pauli_reconstruct, plus_state, \
    rotor_hamiltonian_expectation, spin_eigencheck

logger = logging.getLogger(__name__)

EVOLUTION_CHECKS = {"equivalence", "convergence", "energy", "charge", "unitarity", "pure_state",
                    "picture", "moments", "continuity", "box", "classical_limit", "larmor"}
MOMENT_WINDOW = (3.5, 4.5)
EIGEN_L_MAX = 8
LARMOR_SAMPLES = 33


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    reason: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


@dataclass
class RunReport:
    name: str
    checks: list
    config_hash: str
    wall_time: float = 0.0
    series: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_frame(self) -> pd.DataFrame:
        rows = [{"check": c.name, "value": float(c.value), "tolerance": float(c.tolerance), "pass": c.passed,
                 "reason": c.reason} for c in self.checks]
        return pd.DataFrame(rows, columns=["check", "value", "tolerance", "pass", "reason"])


def _shortfall(observed: float, required: float) -> float:
    """Quanto falta para atingir uma ordem mínima (0 quando atingida)."""
    if math.isnan(observed):
        return math.inf
    return max(0.0, required - observed)


def _steps(T: float, dt: float) -> tuple[int, float]:
    if T == 0 or dt == 0:
        return 0, 0.0
    n = max(1, math.ceil(abs(T) / abs(dt) - 1e-9))
    return n, T / n


# ---------------------------------------------------------------------------
# camada clássica
# ---------------------------------------------------------------------------

class ClassicalSuite:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.H = build_hamiltonian_from(config)
        dim = config.grid["dim"]
        init = config.initial
        self.packet = GaussianPacket(
            center_x=tuple(np.broadcast_to(init["x0"], (dim,)).astype(float)),
            center_p=tuple(np.broadcast_to(init["p0"], (dim,)).astype(float)),
            width_x=(init["width_x"],) * dim, width_p=(init["width_p"],) * dim)
        self.grids = [build_phase_grid(config, n) for n in sorted(config.grid["points"])]
        self._equivalence = None
        self.series = {}
        self.fields = {}

    def _charge(self):
        return angular_momentum_charge() if self.config.grid["dim"] == 2 else energy_charge(self.H)

    def equivalence_report(self):
        if self._equivalence is None:
            config = self.config
            methods = ("liouville", "characteristics", "leaves") if "equivalence" in config.checks \
                else ("liouville",)
            integ = config.integrator
            self._equivalence = verify_classical_equivalence(
                self.H, self.packet, config.t_end, resolutions=self.grids, methods=methods,
                dt=config.dt, cfl=integ["cfl"], sigma_floor=integ["sigma_floor"],
                segments=integ["segments"])
            self.series["classical"] = self._equivalence.series
        return self._equivalence

    def equivalence(self) -> list:
        report = self.equivalence_report()
        tol = self.config.tolerance("equivalence")
        checks = [Check(f"equivalence.{pair}", value, tol) for pair, value in report.distances.items()]
        if "liouville" in report.reference_distances:
            checks.append(Check("equivalence.liouville_vs_exact", report.reference_distances["liouville"], tol))
        if report.relabel_count:
            logger.info("[classical] %d relabelings, min sigma %.3e", report.relabel_count, report.min_sigma)
        return checks

    def convergence(self) -> list:
        """Liouville contra o fluxo exato das características, com dt no Courant fixo por grade."""
        if len(self.grids) < 2:
            raise GridError("convergence needs at least two resolutions")
        if self.H.exact_flow is None:
            raise GridError(f"hamiltonian '{self.H.name}' has no closed-form flow to converge against")
        T, cfl = self.config.t_end, self.config.integrator["cfl"]
        rows = []
        for grid in self.grids:
            solver = LiouvilleSolver(self.H, grid, cfl)
            rho = solver.evolve(self.packet.sample(grid), T)
            error = rho.l1_distance(reference_density(self.packet, self.H, grid, T))
            rows.append({"points": grid.x.points[0], "dt": solver.stable_dt(), "L1_vs_reference": error})
            logger.info("[classical] convergence N=%d L1=%.4e", grid.x.points[0], error)
        table = pd.DataFrame(rows, columns=["points", "dt", "L1_vs_reference"])
        errors, points = table["L1_vs_reference"].to_numpy(), table["points"].to_numpy(float)
        orders = [math.log(e0 / e1) / math.log(n1 / n0)
                  for e0, e1, n0, n1 in zip(errors, errors[1:], points, points[1:]) if e0 > 0 and e1 > 0]
        self.series["convergence"] = table
        observed = min(orders) if orders else math.nan
        return [Check("convergence.order_shortfall",
                      _shortfall(observed, self.config.integrator["order_required"]),
                      self.config.tolerance("convergence"))]

    def energy(self) -> list:
        series = self.equivalence_report().series
        e0 = float(series["energy_mean"].iloc[0])
        drift = float(np.max(np.abs(series["energy_mean"] - e0))) / max(abs(e0), 1e-300)
        return [Check("energy.relative_drift", drift, self.config.tolerance("energy"))]

    def charge(self) -> list:
        config = self.config
        grid = self.grids[-1]
        ensemble = ParticleEnsemble.from_density(self.packet.sample(grid))
        drift = ensemble_charge_drift(self.H, self._charge(), ensemble, config.t_end, config.dt)
        return [Check("charge.ensemble_drift", drift, config.tolerance("charge"))]

    def brackets(self) -> list:
        grid = self.grids[-1]
        Q = self._charge()
        bracket = poisson_bracket(hamiltonian_on_phase_grid(self.H, grid), charge_on_phase_grid(Q, grid), grid)
        return [Check(f"brackets.H_{Q.name}", float(np.max(np.abs(bracket))), self.config.tolerance("brackets"))]


# ---------------------------------------------------------------------------
# camada quântica
# ---------------------------------------------------------------------------

def initial_wavefunction(config: ScenarioConfig, grid, hbar: float | None = None):
    hbar = config.hbar if hbar is None else hbar
    init = config.initial
    preset = init["preset"]
    omega = config.hamiltonian["omega"]
    if preset == "coherent":
        return coherent_state(grid, init["x0"], init["p0"], hbar, omega)
    if preset == "ground":
        return harmonic_ground_state(grid, hbar, omega)
    if preset == "gaussian":
        return periodic_gaussian(grid, init["x0"], init["p0"], hbar)
    if preset == "plane_wave":
        return plane_wave(grid, init["k"], hbar)
    if preset == "modulated":
        return modulated_phase_state(grid, init["k"], init["amplitude"], init["x0"][0], hbar)[0]
    if preset == "random":
        return random_low_band_state(grid, init["band"], config.seed, hbar)
    if preset == "box":
        return box_eigenstates(grid, 1, hbar)[0]
    return ExactPropagator(build_hamiltonian_from(config), grid, hbar).eigenstate(0)


class QuantumSuite:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.H = build_hamiltonian_from(config)
        self.grid = build_config_grid(config)
        self.hbar = config.hbar
        self._run = None
        self.series = {}
        self.fields = {}

    @property
    def dense(self) -> bool:
        return self.grid.node_count <= MAX_BASIS

    def evolution(self) -> dict:
        """Schrödinger, von Neumann e Heisenberg lado a lado com o mesmo propagador."""
        if self._run is not None:
            return self._run
        config, grid = self.config, self.grid
        psi = initial_wavefunction(config, grid).normalized()
        steps, step = _steps(config.t_end, config.dt)
        prop = SplitStepPropagator(self.H, grid, self.hbar, step)
        record_every = max(1, steps // config.integrator["segments"])
        dense = self.dense
        rho = psi.projector() if dense else None
        F = position_operator(grid) if dense else None
        U = np.eye(grid.node_count, dtype=complex) if dense else None
        v0 = psi.values.ravel()
        exact = ExactPropagator(self.H, grid, self.hbar) \
            if dense and "moments" in config.checks and grid.boundary == "periodic" else None
        worst = {"norm": 0.0, "trace": 0.0, "pure": 0.0, "picture": 0.0}
        rows = []

        def record(t):
            norm = psi.norm()
            row = {"t": t, "norm": norm, "trace": norm, "herm_residual": math.nan,
                   "picture_gap": math.nan, "moment_residual": math.nan}
            worst["norm"] = max(worst["norm"], abs(norm - 1.0))
            if dense:
                row["trace"] = rho.trace()
                row["herm_residual"] = rho.hermiticity_residual()
                worst["trace"] = max(worst["trace"], abs(row["trace"] - 1.0))
                worst["pure"] = max(worst["pure"], float(np.max(np.abs(rho.matrix - psi.projector().matrix))))
                heisenberg = np.vdot(v0, U.conj().T @ F.matrix @ U @ v0) * grid.cell_volume
                gap = abs(float(np.real(heisenberg)) - F.expectation(psi))
                row["picture_gap"] = gap
                worst["picture"] = max(worst["picture"], gap)
            if exact is not None and step:
                row["moment_residual"] = verify_moment_equations(self.H, rho, step, exact).residual
            rows.append(row)

        logger.info("[quantum] %s em grade %s, %d passos de dt=%g", self.H.name,
                    "x".join(map(str, grid.points)), steps, step)
        record(0.0)
        for n in range(1, steps + 1):
            psi = prop(psi)
            if dense:
                rho = step_quantum_liouville(self.H, rho, step)
                U = prop.apply(U)
            if n % record_every == 0 or n == steps:
                record(n * step)
            else:
                worst["norm"] = max(worst["norm"], abs(psi.norm() - 1.0))
        self.series["quantum"] = pd.DataFrame(
            rows, columns=["t", "norm", "trace", "herm_residual", "picture_gap", "moment_residual"])
        self.fields["final"] = psi
        self._run = worst
        return worst

    def _needs_dense(self, check: str) -> None:
        if not self.dense:
            raise GridError(f"{check} needs at most {MAX_BASIS} grid nodes, grid has {self.grid.node_count}")

    def unitarity(self) -> list:
        run = self.evolution()
        tol = self.config.tolerance("unitarity")
        checks = [Check("unitarity.norm_drift", run["norm"], tol)]
        if self.dense:
            checks.append(Check("unitarity.trace_drift", run["trace"], tol))
        return checks

    def pure_state(self) -> list:
        self._needs_dense("pure_state")
        return [Check("pure_state.max_entry_error", self.evolution()["pure"], self.config.tolerance("pure_state"))]

    def picture(self) -> list:
        self._needs_dense("picture")
        return [Check("picture.position_gap", self.evolution()["picture"], self.config.tolerance("picture"))]

    def moments(self) -> list:
        """Resíduo em dt e dt/2; a razão deve cair na janela de segunda ordem."""
        self._needs_dense("moments")
        config = self.config
        self.evolution()
        rho = initial_wavefunction(config, self.grid).normalized().projector()
        exact = ExactPropagator(self.H, self.grid, self.hbar)
        coarse = verify_moment_equations(self.H, rho, config.dt, exact)
        fine = verify_moment_equations(self.H, rho, 0.5 * config.dt, exact)
        ratio = coarse.residual / fine.residual if fine.residual > 0 else math.inf
        logger.info("[quantum] resíduo dos momentos %.3e -> %.3e (razão %.3f)", coarse.residual, fine.residual, ratio)
        lo, hi = MOMENT_WINDOW
        logger.debug("[quantum] resíduo de Ehrenfest %.3e", coarse.ehrenfest_residual)
        return [Check("moments.ratio_outside_window", max(0.0, lo - ratio, ratio - hi), config.tolerance("moments"))]

    def madelung(self) -> list:
        config, grid = self.config, self.grid
        tol = config.tolerance("madelung")
        mode = config.initial["k"]
        wave = plane_wave(grid, mode, self.hbar)
        p = madelung_fields(wave, config.integrator["node_floor"], config.phase_factor).momentum.values[0]
        expected = self.hbar * 2.0 * np.pi * mode / grid.lengths[0]
        checks = [Check("madelung.plane_wave", float(np.max(np.abs(p - expected))), tol)]
        psi, analytic = modulated_phase_state(grid, mode, config.initial["amplitude"], config.initial["x0"][0],
                                              self.hbar)
        fields = madelung_fields(psi, config.integrator["node_floor"], config.phase_factor)
        checks.append(Check("madelung.modulated", float(np.max(np.abs(fields.momentum.values[0] - analytic))), tol))
        return checks

    def continuity(self) -> list:
        config = self.config
        psi = initial_wavefunction(config, self.grid).normalized()
        residual = continuity_residual(self.H, psi, config.dt, config.integrator["node_floor"])
        return [Check("continuity.residual", residual, config.tolerance("continuity"))]

    def box(self) -> list:
        """Densidade nas paredes, energias n^2 hbar^2 / 2 (caixa [0, pi]) e estacionariedade."""
        config, grid = self.config, self.grid
        states = box_eigenstates(grid, config.initial["n_max"], self.hbar)
        steps, step = _steps(config.t_end, config.dt)
        prop = SplitStepPropagator(self.H, grid, self.hbar, step)
        L = grid.lengths[0]
        energy_op = OperatorRep(hamiltonian_matrix(self.H, grid, self.hbar), hermitian=True)
        wall = energy = moved = 0.0
        for n, psi in enumerate(states, start=1):
            wall = max(wall, float(np.max(np.abs(wall_values(psi)) ** 2)))
            k = self.hbar * n * np.pi / L
            expected = 0.5 * float(self.H.metric[0, 0]) * k ** 2
            energy = max(energy, abs(energy_op.expectation(psi) - expected))
            evolved = psi
            for _ in range(steps):
                evolved = prop(evolved)
            moved = max(moved, float(np.max(np.abs(evolved.density() - psi.density()))))
        tol = config.tolerance("box")
        return [Check("box.wall_density", wall, tol), Check("box.energy_error", energy, tol),
                Check("box.stationarity", moved, tol)]

    def classical_limit(self) -> list:
        config = self.config
        report = classical_limit_deviation(self.H, self.grid, config.initial["x0"], config.initial["p0"],
                                           config.hbar_sequence, config.t_end)
        self.series["classical_limit"] = pd.DataFrame({"hbar": report.hbars, "deviation": report.deviations})
        observed = report.min_order if report.orders else math.nan
        return [Check("classical_limit.order_shortfall",
                      _shortfall(observed, config.integrator["order_required"]),
                      config.tolerance("classical_limit"))]

    def charge(self) -> list:
        config = self.config
        Q = angular_momentum_charge() if self.grid.dim == 2 else energy_charge(self.H)
        psi = initial_wavefunction(config, self.grid).normalized()
        drift = charge_drift(self.H, Q, psi, config.t_end, config.dt)
        return [Check(f"charge.{Q.name}_drift", drift, config.tolerance("charge"))]


# ---------------------------------------------------------------------------
# camada de spin
# ---------------------------------------------------------------------------

class SpinSuite:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.hbar = config.hbar
        self.l_max = config.grid["l_max"]
        self.series = {}
        self.fields = {}

    def eigen(self) -> list:
        """|+-> em S.S e S3; Y_l^m em L.L e L3 para l <= 8."""
        hbar = self.hbar
        half = build_sphere_grid(self.config, 0.5)
        rows = []
        for label, state, z in (("+", plus_state(half, hbar), 0.5), ("-", minus_state(half, hbar), -0.5)):
            rows.append((f"|{label}>", state, 0.75, z))
        self.fields["plus"], self.fields["minus"] = rows[0][1], rows[1][1]
        whole = build_sphere_grid(self.config, 0.0)
        top = min(EIGEN_L_MAX, self.l_max - 1)
        for l in range(top + 1):
            for m in range(-l, l + 1):
                rows.append((f"Y_{l}^{m}", harmonic_state(l, m, whole, hbar), l * (l + 1.0), float(m)))
        out = []
        worst = 0.0
        for label, state, casimir, z in rows:
            result = spin_eigencheck(state)
            error = max(abs(result.casimir - casimir * hbar ** 2), abs(result.z_component - z * hbar),
                        result.casimir_residual, result.z_residual)
            worst = max(worst, error)
            out.append({"state": label, "casimir": result.casimir, "expected_casimir": casimir * hbar ** 2,
                        "z": result.z_component, "expected_z": z * hbar, "error": error})
        self.series["eigen"] = pd.DataFrame(out, columns=["state", "casimir", "expected_casimir", "z",
                                                         "expected_z", "error"])
        return [Check("eigen.max_error", worst, self.config.tolerance("eigen"))]

    def pauli(self) -> list:
        result = pauli_reconstruct(min(self.l_max, 6), self.hbar)
        return [Check("pauli.deviation", result.deviation, self.config.tolerance("pauli"))]

    def commutators(self) -> list:
        table = commutator_table(self.l_max, self.hbar, seed=self.config.seed)
        self.series["commutators"] = table
        tol = self.config.tolerance("commutators")
        return [Check(f"commutators.{family}", float(group["residual"].max()), tol)
                for family, group in table.groupby("family", sort=True)]

    def hermiticity(self) -> list:
        residuals = hermiticity_residuals(min(self.l_max, 8), self.hbar, self.config.seed)
        return [Check("hermiticity.max_residual", max(residuals.values()), self.config.tolerance("hermiticity"))]

    def rotor(self) -> list:
        ham = self.config.hamiltonian
        B, inertia, hbar = ham["field"], ham["inertia"], self.hbar
        state = plus_state(build_sphere_grid(self.config, 0.5), hbar)
        measured = rotor_hamiltonian_expectation(B, inertia, state)
        expected = 0.75 * hbar ** 2 / inertia + 0.5 * hbar * (B[2] if len(B) > 2 else 0.0)
        return [Check("rotor.energy_error", abs(measured - expected), self.config.tolerance("rotor"))]

    def larmor(self) -> list:
        ham = self.config.hamiltonian
        times = np.linspace(0.0, self.config.t_end, LARMOR_SAMPLES)
        result = larmor_precession(ham["larmor"], times, ham["inertia"], self.hbar, min(self.l_max, 6))
        self.series["larmor"] = result.series
        return [Check("larmor.deviation", result.deviation, self.config.tolerance("larmor"))]

    def ladder(self) -> list:
        constant = ladder_constant(min(self.l_max, 6), self.hbar)
        consistency = ladder_consistency(min(self.l_max, 8), self.hbar, self.config.seed)
        error = max(abs(constant.raising - self.hbar), abs(constant.lowering - self.hbar), consistency)
        return [Check("ladder.error", float(error), self.config.tolerance("ladder"))]


SUITES = {"classical": ClassicalSuite, "equivalence": ClassicalSuite, "quantum": QuantumSuite, "spin": SpinSuite}


def _guarded(suite, check: str, tolerance: float) -> list:
    try:
        return getattr(suite, check)()
    except PhaseFlowError as e:
        logger.warning("[%s] check %s falhou: %s", suite.config.layer, check, e)
        return [Check(check, math.inf, tolerance, str(e))]


def run_checks(config: ScenarioConfig) -> RunReport:
    """Roda os checks de config.checks na ordem declarada."""
    started = time.perf_counter()
    suite = SUITES[config.layer](config)
    checks = []
    for check in config.checks:
        tolerance = config.tolerance(check)
        if config.degenerate and check in EVOLUTION_CHECKS:
            checks.append(Check(check, 0.0, tolerance, "degenerate"))
            continue
        rows = _guarded(suite, check, tolerance)
        for row in rows:
            logger.info("[%s] %s = %.6g (tol %.3g) %s", config.layer, row.name, row.value, row.tolerance,
                        "ok" if row.passed else "FALHOU")
        checks.extend(rows)
    wall = time.perf_counter() - started
    series = {key: suite.series[key] for key in sorted(suite.series)}
    return RunReport(config.name, checks, config.config_hash(), wall, series, dict(suite.fields))
