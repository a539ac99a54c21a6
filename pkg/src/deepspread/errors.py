"""Exception types shared across the package.

The command line front end maps these onto process exit codes, so the
split is by *who has to fix the problem*: the config file, the input
data, or the numerics.
"""


class DeepSpreadError(Exception):
    """Base class for all package errors."""


class ConfigError(DeepSpreadError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(DeepSpreadError, ValueError):
    """Malformed, missing or degenerate input data (CLI exit code 3)."""


class NumericalError(DeepSpreadError, RuntimeError):
    """Numerical failure: non-convergence, domain violation (CLI exit code 4)."""


class FitError(NumericalError):
    """Estimation failed to converge; carries optimizer diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
