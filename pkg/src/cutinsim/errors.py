"""Exception hierarchy shared by the library and the command line tool.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3 and numerical failures exit 4.
"""


class CutinsimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CutinsimError):
    """Invalid configuration value or inconsistent configuration."""


class DataError(CutinsimError):
    """Malformed or insufficient input data."""


class NumericalError(CutinsimError):
    """An algorithm failed to produce a usable numerical result."""


class DomainError(ConfigError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AmbiguousCategoryError(DomainError):
    """A rationality vector with a zero component has no behavior category."""


class DegenerateGridError(NumericalError):
    """A discretized action density carries no probability mass."""


class InfeasibleScenarioError(CutinsimError):
    """The requested cut-in geometry cannot be realized (initial gap < 0)."""


class AbsoluteContinuityError(NumericalError):
    """A proposal assigned zero probability to a sampled rare-event point."""


class StallError(NumericalError):
    """Cross-entropy iteration stopped making progress before convergence."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
