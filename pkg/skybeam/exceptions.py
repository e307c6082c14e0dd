"""Failure classes raised by skybeam, each mapped to a CLI exit status."""

__all__ = ["ConfigError", "DataError", "NumericError"]


class ConfigError(ValueError):
    """An invalid or unknown configuration key or value."""

    exit_code = 2


class DataError(ValueError):
    """Input data that does not match the expected schema or shape."""

    exit_code = 3


class NumericError(ArithmeticError):
    """Non-finite values produced during training or evaluation."""

    exit_code = 4
