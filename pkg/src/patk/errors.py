"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration and data-format
problems exit with 2, numerical failures with 3.
"""


class PatkError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PatkError):
    """Invalid configuration value, missing key, or inconsistent geometry."""


class DataFormatError(PatkError):
    """Malformed raw field file or incompatible array payload."""


class NumericalError(PatkError):
    """Numerical failure: divergence, NaN/Inf in iterates, undefined metric."""
