"""Exception hierarchy.  The CLI maps these onto exit codes."""


class BatchLabError(Exception):
    exit_code = 1


class ConfigError(BatchLabError, ValueError):
    """Invalid configuration; ``key`` names the offending config path."""

    exit_code = 2

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SplitError(ConfigError):
    """A requested split cannot be drawn from the available samples."""


class InfeasibleError(BatchLabError):
    """The requested sampling plan cannot be realised (e.g. too many groups)."""

    exit_code = 3


class DivergenceError(BatchLabError, FloatingPointError):
    """Non-finite loss or gradient during training."""

    exit_code = 3


class CheckpointError(BatchLabError):
    exit_code = 2


class SchemaError(ConfigError):
    """A metrics file is missing required columns or rows."""
