"""Exception hierarchy shared across the package."""


class EegcvError(Exception):
    """Base class for all package errors."""


class DimensionError(EegcvError):
    """Operand shapes do not conform for the requested operation."""


class NumericError(EegcvError):
    """A forward computation produced NaN or Inf."""


class ContractError(EegcvError):
    """A documented precondition was violated by the caller."""


class OracleError(EegcvError):
    """An independent verification oracle could not be applied."""


class MontageError(EegcvError):
    """Invalid or unknown electrode-to-grid mapping."""


class ParseError(EegcvError):
    """Malformed binary or text input.

    ``offset`` is the byte (or line) position at which parsing failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(EegcvError):
    """Invalid run configuration or command-line usage."""


class TrainingAborted(EegcvError):
    """Training stopped early; the last good checkpoint was preserved."""
