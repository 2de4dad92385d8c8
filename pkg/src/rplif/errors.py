"""Exception hierarchy shared by every module.

The CLI maps each class onto a process exit code.
"""


class RPLIFError(Exception):
    exit_code = 1


class ConfigError(RPLIFError, ValueError):
    """Invalid parameters, shapes or configuration files."""

    exit_code = 2


class DataError(RPLIFError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericalError(RPLIFError, FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""

    exit_code = 4


class UsageError(RPLIFError, RuntimeError):
    """An API was called out of order (e.g. backward on an empty tape)."""

    exit_code = 2
