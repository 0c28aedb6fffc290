"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so each family gets its own
base class.
"""

from __future__ import annotations


class PlatoonRiskError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(PlatoonRiskError, ValueError):
    """A parameter is outside its admissible range."""


class GraphConstructionError(InvalidParameterError):
    """Edge list is malformed (self-loop, duplicate, bad index) or disconnected."""


class StabilityDomainError(PlatoonRiskError):
    """Requested quantity only exists inside the delay-stability set."""


class NumericalFailureError(PlatoonRiskError):
    """An iterative method did not reach its tolerance.

    ``residual`` carries the last achieved error measure.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DegenerateCorrelationError(PlatoonRiskError):
    """Correlation between two pairs is numerically +-1."""


class SimulationDivergenceError(NumericalFailureError):
    """State left the finite range during a Monte Carlo run."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class InsufficientSamplesError(PlatoonRiskError):
    """Too few (effective) samples to form a reliable estimate."""

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class ScenarioParseError(PlatoonRiskError):
    """Scenario or edge-list file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
