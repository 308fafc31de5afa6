"""Exception types shared across the package."""


class RiscadeError(Exception):
    """Base class for package errors."""


class ConfigError(RiscadeError):
    """A configuration file or parameter failed validation."""


class DivergenceError(RiscadeError):
    """An iterative solver or training loop produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ChecksumError(RiscadeError):
    """A checkpoint file failed its integrity check."""
