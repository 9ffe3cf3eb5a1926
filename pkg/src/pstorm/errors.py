"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2, DataError -> 3,
ScheduleInfeasibleError -> 4.
"""


class InputError(ValueError):
    """A numeric argument is malformed (non-finite entries, wrong shape, non-unit sample)."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""


class ScheduleInfeasibleError(ValueError):
    """A stepsize/momentum schedule violates a feasibility condition."""


class DataError(ValueError):
    """A dataset is malformed or inconsistent."""


class ParseError(DataError):
    """A data file failed to parse; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """A run configuration is invalid or inconsistent."""
