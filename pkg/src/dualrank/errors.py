"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: DataError/ConfigError -> 1,
NumericalError (divergence, infeasible constraint) -> 2, IOError -> 3.
"""


class DualRankError(Exception):
    """Base class for all package errors."""


class ConfigError(DualRankError):
    """Invalid or inconsistent configuration."""


class DataError(DualRankError):
    """Input data violates a declared invariant."""


class NumericalError(DualRankError):
    """Non-finite loss, divergence, or an infeasible constraint."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
