"""Error taxonomy shared by the library and the CLI.

Exit codes: 2 configuration/usage, 3 data, 4 numerical failure.
"""


class FmirlError(Exception):
    exit_code = 1


class ConfigError(FmirlError):
    """Bad configuration: unknown keys, shape mismatches, invalid values."""

    exit_code = 2


class UsageError(ConfigError):
    """API misuse: empty batch, non-scalar loss, missing preconditions."""


class DataError(FmirlError):
    """Bad or missing data: unreadable dataset, non-finite inputs."""

    exit_code = 3


class NumericalError(FmirlError):
    """NaN/Inf encountered during training, generation or reward evaluation."""

    exit_code = 4


class GenerationError(NumericalError):
    """Numerical failure inside ODE integration; carries the failing step."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
