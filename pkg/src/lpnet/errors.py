"""Exception types shared across the package.

The CLI maps these onto process exit codes, so every failure path in the
library should raise one of them (or a plain ValueError for programmer
errors that a config cannot trigger).
"""


class LPNetError(Exception):
    """Base class for all package errors."""


class ShapeError(LPNetError, ValueError):
    """Tensor dimensions do not satisfy an operation's contract."""

    def __init__(self, op, message):
        self.op = op
        super().__init__(f"{op}: {message}")


class NumericalError(LPNetError, ArithmeticError):
    """An operation produced NaN or Inf, or a numerical check failed."""

    def __init__(self, op, message):
        self.op = op
        super().__init__(f"{op}: {message}")


class ConfigError(LPNetError, ValueError):
    """Invalid or unknown run configuration."""


class FormatError(LPNetError, IOError):
    """Malformed file on read, or unrepresentable data on write."""


class EmptyMaskError(LPNetError, ValueError):
    """A loss or metric was asked to reduce over zero valid pixels."""
