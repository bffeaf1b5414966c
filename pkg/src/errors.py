"""
Exception hierarchy for the parametric-resonance simulator.

Every runtime failure derives from SimulationError so the command line can
map it to a single exit code; configuration problems carry their location.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all simulator failures"""


class ConfigError(SimulationError):
    """Configuration text could not be parsed or violates a precondition"""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        key: Optional[str] = None
    ):
        self.line = line
        self.column = column
        self.key = key
        location = ''
        if line is not None:
            location = f'line {line}, column {column}: '
        super().__init__(location + message)


class SamplingError(SimulationError):
    """Metropolis chain acceptance rate outside the usable band"""


class NonFiniteStateError(SimulationError):
    """Integrator produced NaN or infinite coordinates"""

    def __init__(self, atom_index: int, time: float):
        self.atom_index = atom_index
        self.time = time
        super().__init__(f'non-finite state for atom {atom_index} at t = {time:.9g} s')


class CollisionGridError(SimulationError):
    """Cloud left the collision cell grid even after enlarging it"""


class InsufficientAtomsError(SimulationError):
    """Fewer alive atoms than an estimator needs"""


class ImagingError(SimulationError):
    """Image too degenerate to analyse or analysis region misconfigured"""


class AnalysisError(SimulationError):
    """Sweep post-processing could not produce an estimate"""


class ResonanceNotBracketedError(AnalysisError):
    """Survival curve has no interior minimum"""


class NotSaturatedError(AnalysisError):
    """Temperature has not reached a steady value at the end of the sweep"""


class InsufficientDataError(AnalysisError):
    """Not enough sweep points for the requested fit"""
