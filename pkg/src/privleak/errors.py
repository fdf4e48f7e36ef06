"""Error taxonomy shared across the package.

The CLI maps these onto process exit codes, so raising the right class is
part of the public contract: config/contract/parse/format problems exit 2,
training divergence exits 3, plain I/O failures exit 1.
"""


class PrivleakError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PrivleakError):
    """Operand shapes do not line up."""


class NumericError(PrivleakError):
    """A forward operation produced NaN or Inf from finite inputs."""


class ContractError(PrivleakError):
    """A documented precondition was violated by the caller."""


class ConfigError(PrivleakError):
    """A configuration value is out of range or inconsistent."""


class FormatError(PrivleakError):
    """A serialized artifact (model file, report) is malformed."""


class ParseError(PrivleakError):
    """Text input (CSV, config file) could not be parsed."""


class DivergenceError(PrivleakError):
    """Training produced a non-finite loss; message carries the epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
