"""Error hierarchy shared by every app.

Each error carries the process exit code the management commands use
when it escapes a command.
"""

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERIC = 3


class ArbError(Exception):
    """Base class for all reconstruction errors."""

    exit_code = EXIT_USAGE


class InputError(ArbError, ValueError):
    """Invalid shapes, ranges or empty index sets."""

    exit_code = EXIT_USAGE


class DegenerateError(InputError):
    """Parameters sit on a limit where the requested quantity is undefined."""


class ParseError(InputError):
    """A file could not be read or did not match its format."""

    exit_code = EXIT_PARSE

    def __init__(self, message, path=None, line=None, offset=None):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class CapabilityError(ArbError):
    """The request exceeds what a solver is built to handle."""

    exit_code = EXIT_NUMERIC


class NumericalError(ArbError, ArithmeticError):
    """Singular systems, non-finite values."""

    exit_code = EXIT_NUMERIC
