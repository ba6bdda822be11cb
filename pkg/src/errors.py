"""
Exceções do PhaseFlow Lab.

Todas derivam de PhaseFlowError e também do builtin equivalente
(ValueError / RuntimeError), então quem já captura builtins continua funcionando.
run_scenario converte qualquer PhaseFlowError em um check reprovado.
"""


class PhaseFlowError(Exception):
    """Base de todos os erros do laboratório."""


class GridError(PhaseFlowError, ValueError):
    pass


class BandwidthError(PhaseFlowError, ValueError):
    pass


class StateError(PhaseFlowError, ValueError):
    """Estado não finito, não normalizado ou em grade incompatível."""


class UnsupportedMetricError(PhaseFlowError, ValueError):
    pass


class HermiticityError(PhaseFlowError, ValueError):
    def __init__(self, residual: float, what: str = "matrix"):
        self.residual = residual
        super().__init__(f"{what} is not hermitian (residual {residual:.3e})")


class ScenarioParseError(PhaseFlowError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<scenario>'}:{line}" if line is not None else (path or "<scenario>")
        super().__init__(f"{where}: {message}")


class ScenarioValidationError(PhaseFlowError, ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"invalid value for '{key}': {message}")


class CFLViolation(PhaseFlowError, ValueError):
    def __init__(self, courant: float, limit: float):
        self.courant = courant
        self.limit = limit
        super().__init__(f"dt violates CFL bound: courant {courant:.4f} > {limit:.4f}")


class CausticError(PhaseFlowError, RuntimeError):
    def __init__(self, time: float, min_sigma: float, floor: float):
        self.time = time
        self.min_sigma = min_sigma
        self.floor = floor
        super().__init__(f"caustic at t={time:.6g}: min sigma {min_sigma:.3e} <= floor {floor:.3e}")


class CoverageError(PhaseFlowError, RuntimeError):
    pass


class NodeFloorError(PhaseFlowError, RuntimeError):
    def __init__(self, message: str, masked: int = 0):
        self.masked = masked
        super().__init__(message)


class PictureMismatchError(PhaseFlowError, RuntimeError):
    def __init__(self, gap: float, tolerance: float):
        self.gap = gap
        self.tolerance = tolerance
        super().__init__(f"Heisenberg and Schrodinger pictures differ by {gap:.3e} (tolerance {tolerance:.1e})")


class QuadratureLeakError(PhaseFlowError, RuntimeError):
    def __init__(self, leak: float, tolerance: float):
        self.leak = leak
        self.tolerance = tolerance
        super().__init__(f"off-block leakage {leak:.3e} exceeds {tolerance:.1e}")
