"""Exception types shared across the package."""

from __future__ import annotations


class ContactGraphError(Exception):
    """Base class for all package errors."""


class FormatError(ContactGraphError, ValueError):
    """A data file does not conform to its format.

    ``line`` is 1-based; ``None`` when the problem is not tied to a line.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        self.reason = message
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DataError(ContactGraphError, ValueError):
    """Inputs are well-formed but inconsistent with each other."""


class ShapeError(ContactGraphError, ValueError):
    pass


class TapeError(ContactGraphError, RuntimeError):
    pass


class TrainingError(ContactGraphError, RuntimeError):
    pass
