"""Exception taxonomy shared across the package.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class ContractError(ValueError):
    """An operation was called in a way that violates its contract."""


class DimensionError(ContractError):
    """Array shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or hit a domain violation."""


class DataError(ValueError):
    """A dataset file or manifest is missing, malformed, or inconsistent."""


class ConfigError(ValueError):
    """Run configuration is invalid or incomplete."""
