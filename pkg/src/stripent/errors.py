"""Exception types and resource caps shared by every module."""

import os


class StripentError(Exception):
    """Base class; ``code`` is the CLI exit status for this failure."""

    code = 2


class ContractError(StripentError, ValueError):
    """An input violates an operation's precondition."""

    code = 2


class SftParseError(ContractError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceError(StripentError, RuntimeError):
    """A configured size cap would be exceeded."""

    code = 3


class ConvergenceError(StripentError, RuntimeError):
    """An iterative method ran out of iterations.

    ``last`` carries whatever partial result the method had (for power
    iteration, the final enclosure).
    """

    code = 2

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


DEFAULT_MAX_COLUMNS = 4_000_000
DEFAULT_MAX_SITES = 20


def max_columns() -> int:
    return int(os.environ.get("STRIPENT_MAX_COLUMNS", DEFAULT_MAX_COLUMNS))


def max_sites() -> int:
    return int(os.environ.get("STRIPENT_MAX_SITES", DEFAULT_MAX_SITES))
