"""Exception hierarchy.

Each family maps to one CLI exit code (see ``ghostspec.cli``).
"""


class GhostSpecError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(GhostSpecError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 1


class SimulationError(GhostSpecError):
    exit_code = 2


class AnalysisError(GhostSpecError, ValueError):
    exit_code = 3


class DomainError(AnalysisError):
    """Argument outside the mathematical domain of an operation."""


class InvalidParameterError(AnalysisError):
    pass


class ShapeError(AnalysisError):
    """Spectrum shape does not allow the requested measurement."""


class EmptySpectrumError(AnalysisError):
    pass


class GridMismatchError(AnalysisError):
    pass


class GridCoverageError(ConfigError):
    pass


class InsufficientDataError(AnalysisError):
    pass


class UnboundedCARError(AnalysisError):
    """No accidental coincidences were recorded, so CAR has no finite value."""

    def __init__(self, n_cc):
        self.n_cc = int(n_cc)
        super().__init__(f"CAR unbounded: N_acc = 0 with N_cc = {self.n_cc}")


class DataIOError(GhostSpecError, OSError):
    exit_code = 4
