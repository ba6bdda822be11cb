"""
Configuração de cenários: arquivo INI plano -> ScenarioConfig validado.

- Seções: [scenario] [hamiltonian] [grid] [integrator] [initial] [tolerances] [output]
- Chaves normalizadas (minúsculas, '-', '.', espaço -> '_') e resolvidas por
  uma tabela de aliases (ALIASES).
- Chaves desconhecidas são rejeitadas; defaults aplicados explicitamente.
- Presets embutidos (PRESETS) podem ser usados no lugar de um caminho.
Uso:
    from src.scenario import parse_scenario
    config = parse_scenario('harmonic-equivalence')
"""

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from src.errors import ScenarioParseError, ScenarioValidationError
from src.grids import BOUNDARIES, make_phase_grid, make_sphere_grid, make_uniform_grid
from src.hamiltonian import PRESETS as HAMILTONIAN_PRESETS, build_hamiltonian, tabulated

logger = logging.getLogger(__name__)

LAYERS = ("classical", "equivalence", "quantum", "spin")
CLASSICAL_CHECKS = ("equivalence", "convergence", "energy", "charge", "brackets")
CHECKS = {
    "classical": CLASSICAL_CHECKS,
    "equivalence": CLASSICAL_CHECKS,
    "quantum": ("unitarity", "pure_state", "picture", "moments", "madelung", "continuity",
                "box", "classical_limit", "charge"),
    "spin": ("eigen", "pauli", "commutators", "hermiticity", "rotor", "larmor", "ladder"),
}
DEFAULT_CHECKS = {
    "classical": ("equivalence", "energy", "brackets"),
    "equivalence": ("equivalence", "energy", "brackets"),
    "quantum": ("unitarity", "pure_state", "picture"),
    "spin": CHECKS["spin"],
}
DEFAULT_TOLERANCES = {
    "equivalence": 5e-3, "convergence": 0.0, "energy": 1e-5, "charge": 1e-8, "brackets": 1e-10,
    "unitarity": 1e-10, "pure_state": 1e-8, "picture": 1e-9, "moments": 0.0, "madelung": 1e-8,
    "continuity": 1e-4, "box": 1e-8, "classical_limit": 0.0,
    "eigen": 1e-6, "pauli": 1e-8, "commutators": 1e-7, "hermiticity": 1e-8, "rotor": 1e-8,
    "larmor": 1e-6, "ladder": 1e-8,
}
FORMATS = ("csv", "text")
INITIAL_PRESETS = ("gaussian", "coherent", "ground", "plane_wave", "modulated", "random", "box", "eigenstates")

# secao -> chave -> (tipo, default); None = resolvido depois
SCHEMA = {
    "scenario": {
        "name": ("str", "scenario"), "layer": ("str", "classical"), "checks": ("strs", None),
        "seed": ("int", 0), "hbar": ("float", 1.0), "phase_factor": ("float", 2.0),
        "hbar_sequence": ("floats", (0.25, 0.125, 0.0625)),
    },
    "hamiltonian": {
        "preset": ("str", "harmonic"), "omega": ("float", 1.0), "mass": ("float", 1.0),
        "a0": ("float", 0.0), "a1": ("float", 1.0), "g": ("float", 1.0), "table": ("str", ""),
        "field": ("floats", (0.0, 0.0, 1.0)), "inertia": ("float", 1.0), "larmor": ("float", 1.0),
    },
    "grid": {
        "dim": ("int", 1), "x_min": ("float", -4.0), "x_max": ("float", 4.0), "points": ("ints", (256,)),
        "boundary": ("str", "periodic"), "p_min": ("float", -4.0), "p_max": ("float", 4.0),
        "p_points": ("int", 0), "p_boundary": ("str", "open"), "l_max": ("int", 16),
    },
    "integrator": {
        "dt": ("float", None), "t_end": ("float", 1.0), "cfl": ("float", 0.9),
        "sigma_floor": ("float", 1e-3), "node_floor": ("float", 1e-8), "segments": ("int", 8),
        "order_required": ("float", 1.8),
    },
    "initial": {
        "preset": ("str", "gaussian"), "x0": ("floats", (1.0,)), "p0": ("floats", (0.0,)),
        "width_x": ("float", 0.5), "width_p": ("float", 0.5), "k": ("int", 3),
        "amplitude": ("float", 0.2), "n_max": ("int", 4), "band": ("int", 4),
    },
    "tolerances": {name: ("float", None) for name in DEFAULT_TOLERANCES},
    "output": {"dir": ("str", "data/reports"), "format": ("str", "csv")},
}

ALIASES = {
    "h_bar": "hbar", "planck": "hbar",
    "timestep": "dt", "time_step": "dt",
    "t": "t_end", "t_final": "t_end", "duration": "t_end",
    "n": "points", "n_points": "points", "nodes": "points",
    "lmax": "l_max", "bc": "boundary", "courant": "cfl", "sigma_min": "sigma_floor",
    "potential": "preset", "out": "dir", "out_dir": "dir", "fmt": "format", "order": "order_required",
}

POSITIVE = {"hbar", "phase_factor", "omega", "mass", "inertia", "cfl", "sigma_floor", "node_floor",
            "width_x", "width_p", "g"}


def normalize_key(key: str) -> str:
    n = str(key).strip().lower().replace(' ', '_').replace('.', '_').replace('-', '_')
    return ALIASES.get(n, n)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    layer: str
    checks: tuple
    seed: int
    hbar: float
    phase_factor: float
    hbar_sequence: tuple
    hamiltonian: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str = "<scenario>"

    @property
    def dt(self) -> float:
        return self.integrator["dt"]

    @property
    def t_end(self) -> float:
        return self.integrator["t_end"]

    @property
    def degenerate(self) -> bool:
        return self.dt == 0 or self.t_end == 0

    def tolerance(self, check: str) -> float:
        return self.tolerances.get(check, DEFAULT_TOLERANCES[check])

    def canonical(self) -> str:
        """Texto canônico (chaves ordenadas, floats em repr); o diretório de saída não entra."""
        lines = []
        head = {"name": self.name, "layer": self.layer, "checks": self.checks, "seed": self.seed,
                "hbar": self.hbar, "phase_factor": self.phase_factor, "hbar_sequence": self.hbar_sequence}
        sections = {"scenario": head, "hamiltonian": self.hamiltonian, "grid": self.grid,
                    "integrator": self.integrator, "initial": self.initial,
                    "tolerances": {k: self.tolerance(k) for k in self.checks},
                    "output": {"format": self.output.get("format")}}
        for section in sorted(sections):
            lines.append(f"[{section}]")
            for key in sorted(sections[section]):
                lines.append(f"{key} = {_render(sections[section][key])}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def with_output(self, out_dir: str | None = None, fmt: str | None = None) -> "ScenarioConfig":
        output = dict(self.output)
        if out_dir:
            output["dir"] = out_dir
        if fmt:
            if fmt not in FORMATS:
                raise ScenarioValidationError("format", f"expected one of {', '.join(FORMATS)}")
            output["format"] = fmt
        return replace(self, output=output)


def _render(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _number(key: str, text: str) -> float:
    s = text.strip().lower().replace(' ', '')
    try:
        if s.endswith("pi"):
            factor = s[:-2].rstrip('*')
            signs = {'': 1.0, '+': 1.0, '-': -1.0}
            value = (signs[factor] if factor in signs else float(factor)) * math.pi
        else:
            value = float(s)
    except ValueError:
        raise ScenarioValidationError(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ScenarioValidationError(key, "must be finite")
    return value


def _integer(key: str, text: str) -> int:
    value = _number(key, text)
    if value != int(value):
        raise ScenarioValidationError(key, f"expected an integer, got {text!r}")
    return int(value)


def _convert(key: str, kind: str, text: str):
    items = [t.strip() for t in text.split(',') if t.strip()]
    if kind == "str":
        return text.strip()
    if kind == "strs":
        return tuple(normalize_key(t) for t in items)
    if kind == "float":
        return _number(key, text)
    if kind == "int":
        return _integer(key, text)
    if not items:
        raise ScenarioValidationError(key, "empty list")
    if kind == "floats":
        return tuple(_number(key, t) for t in items)
    return tuple(_integer(key, t) for t in items)


def parse_text(text: str, source: str = "<scenario>") -> dict:
    """Lê o texto INI e devolve {secao: {chave: texto}} sem validar valores."""
    raw = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith('['):
            if not stripped.endswith(']'):
                raise ScenarioParseError("unterminated section header", lineno, source)
            section = normalize_key(stripped[1:-1])
            if section not in SCHEMA:
                raise ScenarioParseError(f"unknown section [{section}]", lineno, source)
            raw.setdefault(section, {})
            continue
        if '=' not in stripped:
            raise ScenarioParseError(f"expected 'key = value', got {stripped!r}", lineno, source)
        if section is None:
            raise ScenarioParseError("key outside of any section", lineno, source)
        key, value = stripped.split('=', 1)
        key = normalize_key(key)
        value = value.split(' #')[0].split(' ;')[0].strip()
        if key in raw[section]:
            raise ScenarioParseError(f"duplicate key '{key}'", lineno, source)
        raw[section][key] = (value, lineno)
    return raw


def _resolve(raw: dict, source: str) -> dict:
    out = {}
    for section, keys in SCHEMA.items():
        values = {}
        given = raw.get(section, {})
        for key in given:
            if key not in keys:
                raise ScenarioValidationError(f"{section}.{key}", "unknown key")
        for key, (kind, default) in keys.items():
            if key in given:
                values[key] = _convert(key, kind, given[key][0])
            elif default is not None:
                values[key] = default
        out[section] = values
    return out


def _validate(sections: dict) -> None:
    for section, values in sections.items():
        for key, value in values.items():
            if key in POSITIVE and not value > 0:
                raise ScenarioValidationError(key, f"must be positive, got {value}")
    head, grid, integ = sections["scenario"], sections["grid"], sections["integrator"]
    if head["layer"] not in LAYERS:
        raise ScenarioValidationError("layer", f"expected one of {', '.join(LAYERS)}")
    for check in head.get("checks") or ():
        if check not in CHECKS[head["layer"]]:
            raise ScenarioValidationError("checks", f"'{check}' is not a {head['layer']} check")
    for name, tol in sections["tolerances"].items():
        if tol < 0:
            raise ScenarioValidationError(name, "tolerance must be >= 0")
    if integ.get("dt") is not None and integ["dt"] < 0:
        raise ScenarioValidationError("dt", f"must be >= 0, got {integ['dt']}")
    if integ["t_end"] < 0:
        raise ScenarioValidationError("t_end", "must be >= 0")
    if integ["segments"] < 1:
        raise ScenarioValidationError("segments", "must be >= 1")
    if grid["dim"] not in (1, 2):
        raise ScenarioValidationError("dim", "must be 1 or 2")
    if grid["boundary"] not in BOUNDARIES:
        raise ScenarioValidationError("boundary", f"expected one of {', '.join(BOUNDARIES)}")
    if grid["p_boundary"] not in ("periodic", "open"):
        raise ScenarioValidationError("p_boundary", "expected periodic or open")
    if not grid["x_max"] > grid["x_min"]:
        raise ScenarioValidationError("x_max", "must exceed x_min")
    if not grid["p_max"] > grid["p_min"]:
        raise ScenarioValidationError("p_max", "must exceed p_min")
    if min(grid["points"]) < 8:
        raise ScenarioValidationError("points", "need at least 8 points per axis")
    if grid["p_points"] and grid["p_points"] < 8:
        raise ScenarioValidationError("p_points", "need at least 8 points per axis")
    if grid["l_max"] < 2:
        raise ScenarioValidationError("l_max", "must be >= 2")
    ham = sections["hamiltonian"]
    if ham["preset"] not in HAMILTONIAN_PRESETS and ham["preset"] != "tabulated":
        raise ScenarioValidationError("preset", f"unknown hamiltonian preset '{ham['preset']}'")
    if ham["preset"] == "tabulated" and not ham["table"]:
        raise ScenarioValidationError("table", "tabulated hamiltonian needs a table path")
    if sections["initial"]["preset"] not in INITIAL_PRESETS:
        raise ScenarioValidationError("initial.preset", f"expected one of {', '.join(INITIAL_PRESETS)}")
    if sections["output"]["format"] not in FORMATS:
        raise ScenarioValidationError("format", f"expected one of {', '.join(FORMATS)}")
    if any(h <= 0 for h in head["hbar_sequence"]):
        raise ScenarioValidationError("hbar_sequence", "values must be positive")


def parse_scenario(source: str) -> ScenarioConfig:
    """
    Lê um cenário a partir de um preset embutido ou de um arquivo.
    Retorna ScenarioConfig com todos os defaults aplicados (dt inclusive).
    """
    if source in PRESETS:
        text, origin = PRESETS[source], f"<preset:{source}>"
    else:
        if not os.path.exists(source):
            raise FileNotFoundError(f"Arquivo não encontrado: {source}")
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
        origin = source
    logger.info("[parse] lendo cenário %s", origin)
    sections = _resolve(parse_text(text, origin), origin)
    _validate(sections)
    head = sections["scenario"]
    checks = head.get("checks") or DEFAULT_CHECKS[head["layer"]]
    config = ScenarioConfig(
        name=head["name"], layer=head["layer"], checks=tuple(checks), seed=head["seed"],
        hbar=head["hbar"], phase_factor=head["phase_factor"], hbar_sequence=tuple(head["hbar_sequence"]),
        hamiltonian=sections["hamiltonian"], grid=sections["grid"], integrator=sections["integrator"],
        initial=sections["initial"], tolerances=sections["tolerances"], output=sections["output"],
        source=origin)
    if config.integrator.get("dt") is None:
        integrator = dict(config.integrator, dt=default_dt(config))
        config = replace(config, integrator=integrator)
        logger.debug("dt não informado; regra CFL deu dt=%r", config.dt)
    return config


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_config_grid(config: ScenarioConfig, points: int | None = None):
    g = config.grid
    n = points if points is not None else max(g["points"])
    return make_uniform_grid(g["dim"], (g["x_min"], g["x_max"]), n, g["boundary"])


def build_phase_grid(config: ScenarioConfig, points: int | None = None):
    g = config.grid
    x_grid = build_config_grid(config, points)
    p_points = g["p_points"] or x_grid.points[0]
    if points is not None and g["p_points"]:
        p_points = g["p_points"] * points // max(g["points"])
    return make_phase_grid(x_grid, (g["p_min"], g["p_max"]), p_points, p_boundary=g["p_boundary"])


def build_sphere_grid(config: ScenarioConfig, spin_weight: float = 0.0):
    return make_sphere_grid(config.grid["l_max"], spin_weight)


def read_potential_table(path: str, grid) -> tuple:
    """Lê CSV (x, U[, A]) via pandas e interpola periodicamente nos nós da grade."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Arquivo não encontrado: {path}")
    df = pd.read_csv(path)
    df.columns = [normalize_key(c) for c in df.columns]
    if 'x' not in df.columns or 'u' not in df.columns:
        raise ScenarioValidationError("table", f"{path} needs columns x and U")
    df = df.sort_values('x')
    nodes = grid.axes[0]
    period = grid.lengths[0]
    U = np.interp(nodes, df['x'].to_numpy(float), df['u'].to_numpy(float), period=period)
    A = None
    if 'a' in df.columns:
        A = np.interp(nodes, df['x'].to_numpy(float), df['a'].to_numpy(float), period=period)
    return U, A


def build_hamiltonian_from(config: ScenarioConfig):
    ham = config.hamiltonian
    preset = ham["preset"]
    if preset == "tabulated":
        grid = build_config_grid(config)
        U, A = read_potential_table(ham["table"], grid)
        return tabulated(grid, U, A)
    params = {
        "free": {"dim": config.grid["dim"], "mass": ham["mass"]},
        "harmonic": {"omega": ham["omega"], "dim": config.grid["dim"]},
        "box": {"dim": config.grid["dim"]},
        "vector-potential": {"a0": ham["a0"], "a1": ham["a1"]},
        "central": {"omega": ham["omega"]},
        "pendulum": {"g": ham["g"]},
    }[preset]
    return build_hamiltonian(preset, **params)


def default_dt(config: ScenarioConfig) -> float:
    """Regra CFL da camada: Liouville para a clássica, trânsito de meia célula para a quântica."""
    if config.layer == "spin":
        return 1e-2
    H = build_hamiltonian_from(config)
    if config.layer in ("classical", "equivalence"):
        from src.classical import stable_dt
        return min(stable_dt(H, build_phase_grid(config, n), config.integrator["cfl"])
                   for n in config.grid["points"])
    from src.quantum import default_quantum_dt
    return default_quantum_dt(H, build_config_grid(config), config.hbar)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESETS = {
    "harmonic-equivalence": """
[scenario]
name = harmonic-equivalence
layer = equivalence
checks = equivalence, energy, brackets
[hamiltonian]
preset = harmonic
omega = 1
[grid]
x_min = -4
x_max = 4
points = 256
boundary = open
p_min = -4
p_max = 4
[integrator]
t_end = 2pi
segments = 8
[initial]
preset = gaussian
x0 = 1
p0 = 0
width_x = 0.5
width_p = 0.5
""",
    "free-convergence": """
[scenario]
name = free-convergence
layer = equivalence
checks = convergence
[hamiltonian]
preset = free
[grid]
x_min = -4
x_max = 4
points = 64, 128, 256
boundary = periodic
p_min = -4
p_max = 4
[integrator]
t_end = 1
segments = 1
order_required = 1.8
[initial]
preset = gaussian
x0 = 0
p0 = 0
width_x = 0.5
width_p = 0.5
""",
    "charge-central": """
[scenario]
name = charge-central
layer = classical
checks = charge, brackets
[hamiltonian]
preset = central
omega = 1
[grid]
dim = 2
x_min = -4
x_max = 4
points = 16
boundary = open
p_min = -4
p_max = 4
[integrator]
t_end = 1
[initial]
preset = gaussian
x0 = 1, 0
p0 = 0, 1
width_x = 0.7
width_p = 0.7
""",
    "quantum-harmonic": """
[scenario]
name = quantum-harmonic
layer = quantum
checks = unitarity, pure_state, picture
[hamiltonian]
preset = harmonic
[grid]
x_min = -8
x_max = 8
points = 128
[integrator]
t_end = 2pi
dt = 5e-3
[initial]
preset = coherent
x0 = 1
p0 = 0
""",
    "moment-lemma": """
[scenario]
name = moment-lemma
layer = quantum
checks = moments
[hamiltonian]
preset = pendulum
g = 1
[grid]
x_min = 0
x_max = 2pi
points = 64
[integrator]
dt = 1e-2
t_end = 1
[initial]
preset = random
band = 4
""",
    "madelung": """
[scenario]
name = madelung
layer = quantum
checks = madelung, continuity
[hamiltonian]
preset = free
[grid]
x_min = -pi
x_max = pi
points = 128
[integrator]
dt = 1e-3
t_end = 1
[initial]
preset = modulated
x0 = 0
k = 3
amplitude = 0.2
width_x = 1
""",
    "box": """
[scenario]
name = box
layer = quantum
checks = box
[hamiltonian]
preset = box
[grid]
x_min = 0
x_max = pi
points = 64
boundary = box-doubled
[integrator]
dt = 1e-3
t_end = 0.1
[initial]
preset = box
n_max = 4
""",
    "charge-central-quantum": """
[scenario]
name = charge-central-quantum
layer = quantum
checks = charge
[hamiltonian]
preset = central
omega = 1
[grid]
dim = 2
x_min = -8
x_max = 8
points = 64
[integrator]
dt = 5e-3
t_end = 1
[initial]
preset = coherent
x0 = 1.5, 0
p0 = 0, 1
""",
    "classical-limit": """
[scenario]
name = classical-limit
layer = quantum
checks = classical_limit
hbar_sequence = 0.25, 0.125, 0.0625
[hamiltonian]
preset = pendulum
g = 1
[grid]
x_min = -pi
x_max = pi
points = 128
[integrator]
t_end = 2
order_required = 0.8
[initial]
preset = gaussian
x0 = 0
p0 = 1
""",
    "spin-suite": """
[scenario]
name = spin-suite
layer = spin
[hamiltonian]
field = 0, 0, 1
inertia = 1
larmor = 1
[grid]
l_max = 16
[integrator]
t_end = 6.283185307179586
""",
    "degenerate": """
[scenario]
name = degenerate
layer = equivalence
checks = equivalence, energy
[hamiltonian]
preset = harmonic
[grid]
x_min = -4
x_max = 4
points = 64
boundary = open
[integrator]
dt = 0
t_end = 1
[initial]
preset = gaussian
""",
}
