"""
Module: errors
Exception hierarchy shared by every module. Each family carries the
process exit code the CLI reports for it.
"""


class SparseFSError(Exception):
    """Base class for all engine failures."""

    exit_code = 1


class ConfigError(SparseFSError, ValueError):
    """Invalid configuration value, range or option name."""

    exit_code = 2


class DataError(SparseFSError, ValueError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 3


class NumericError(SparseFSError, ArithmeticError):
    """Non-finite training state or an impossible topology update."""

    exit_code = 4
