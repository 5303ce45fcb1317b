"""Exception hierarchy shared by the library and the command line."""


class VCScoreError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(VCScoreError, ValueError):
    """Input data are malformed or outside the family's support."""

    exit_code = 2

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConvergenceError(VCScoreError, RuntimeError):
    """Newton-Raphson failed; ``last_iterate`` holds the final coefficients."""

    exit_code = 3

    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class ConfigError(VCScoreError, ValueError):
    """Invalid configuration value or unknown configuration key."""

    exit_code = 4


class ParameterError(VCScoreError, ValueError):
    """A model parameter lies outside its admissible range."""
