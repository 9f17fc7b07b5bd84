"""Exception hierarchy.

Every package error carries the process exit code the CLI maps it to:
1 for configuration problems, 2 for bad input data, 3 for internal invariant
failures. Data and config errors are also ``ValueError`` so callers that only
know the standard library can still catch them.
"""

from typing import List, Optional, Sequence


class C2LTError(Exception):
    """Root of the package's exception hierarchy."""

    exit_code = 3


class ConfigError(C2LTError, ValueError):
    """Invalid configuration key, value or parameter."""

    exit_code = 1


class DataError(C2LTError, ValueError):
    """Malformed, empty or degenerate input data."""

    exit_code = 2


class ParseError(DataError):
    """OBJ text that cannot be parsed. ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ArchiveError(DataError):
    """Chart archive with a bad header or a corrupt record. ``record`` is the 1-based line."""

    def __init__(self, message: str, record: Optional[int] = None) -> None:
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class InvariantError(C2LTError, AssertionError):
    """An internal structural invariant does not hold."""

    exit_code = 3


class CycleError(InvariantError):
    """The assembly graph is not a forest."""

    def __init__(self, cycle: Sequence) -> None:
        self.cycle: List = list(cycle)
        path = " -> ".join(str(node) for node in self.cycle)
        super().__init__(f"assembly graph contains a cycle: {path}")


class DepthError(InvariantError):
    """A root path is longer than the configured maximum depth."""
