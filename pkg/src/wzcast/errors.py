"""Shared exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class WzcastError(Exception):
    """Base class for all package errors."""


class ConfigError(WzcastError, ValueError):
    """Invalid configuration or parameter value."""


class DataError(WzcastError, ValueError):
    """Malformed, inconsistent, or degenerate input data."""


class NumericError(WzcastError, ArithmeticError):
    """A computation produced non-finite values."""
