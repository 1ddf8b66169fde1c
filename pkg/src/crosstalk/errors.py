"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError and bad invocations exit 1,
ShapeError / DataError / CheckpointError exit 2.
"""


class CrosstalkError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(CrosstalkError, ValueError):
    """Tensor or array shapes are inconsistent with an operation's contract."""


class DataError(CrosstalkError, ValueError):
    """Input data violates a precondition (bad labels, empty waveform, ...)."""


class ConfigError(CrosstalkError, ValueError):
    """A configuration value or key is invalid."""


class CheckpointError(DataError):
    """A checkpoint file is malformed, has an unknown version, or does not
    match the model it is being loaded into."""
