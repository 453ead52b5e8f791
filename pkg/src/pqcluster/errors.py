"""Exception types shared across the package."""


class PQClusterError(Exception):
    """Base class for package errors."""


class ConfigError(PQClusterError, ValueError):
    """Invalid configuration or command-line input."""


class NumericalError(PQClusterError, ArithmeticError):
    """A computation produced non-finite values or diverged."""


class StageError(PQClusterError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
