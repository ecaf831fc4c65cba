"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class SpartaError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 4


class ParseError(SpartaError):
    """Lexical or syntactic error in a program source; carries a position."""

    exit_code = 1

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


class SemanticError(SpartaError):
    """Well-formed input with an invalid meaning (names, ranks, formats)."""

    exit_code = 2


class IngestError(SpartaError):
    """Problem reading or writing an external tensor file."""

    exit_code = 3


class EngineError(SpartaError):
    """Runtime failure: extent conflicts, malformed storage, bad value indices."""

    exit_code = 4
