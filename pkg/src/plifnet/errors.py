"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class PlifnetError(Exception):
    """Base class for all package errors."""


class ShapeError(PlifnetError):
    """Operand shapes are incompatible with the requested operation."""


class ContractViolation(PlifnetError):
    """An input breaks a documented precondition (e.g. non-binary spikes)."""


class ConfigError(PlifnetError):
    """Invalid configuration file, network spec string, or CLI arguments."""


class DataError(PlifnetError):
    """Dataset files missing, malformed, or inconsistent."""


class NumericError(PlifnetError):
    """Non-finite values encountered during training."""
