"""Exception types shared across the package."""


class MRLMCError(Exception):
    """Base class for package errors."""


class ConfigError(MRLMCError, ValueError):
    """A configuration or input value failed validation.

    ``field`` names the offending setting when one can be identified.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class DataError(MRLMCError):
    """On-disk dataset is missing, malformed or corrupt."""


class NumericError(MRLMCError, ArithmeticError):
    """A non-finite or degenerate value appeared during computation."""
