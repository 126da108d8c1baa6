"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, ValidationError -> 3,
NumericalError -> 4.
"""


class BlockErgmError(Exception):
    """Base class for all package errors."""


class ConfigError(BlockErgmError):
    """Malformed configuration file or flags."""


class ValidationError(BlockErgmError):
    """Inputs violate a documented precondition."""


class ParseError(ValidationError):
    """Malformed input file; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BudgetExceededError(ValidationError):
    """Exact enumeration would exceed the configured budget."""

    def __init__(self, message, required=None):
        self.required = required
        super().__init__(message)


class NumericalError(BlockErgmError):
    """A numerical procedure failed beyond recovery."""
