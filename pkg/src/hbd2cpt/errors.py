"""Exception types shared across the toolkit."""
from __future__ import annotations


class Hbd2CptError(Exception):
    """Base class for all toolkit errors."""


class SortMismatch(Hbd2CptError):
    pass


class UnboundVariable(Hbd2CptError):
    pass


class DivisionByZero(Hbd2CptError):
    def __init__(self, message: str = "division by zero", step: int | None = None,
                 block: str | None = None):
        super().__init__(message)
        self.step = step
        self.block = block


class ArityMismatch(Hbd2CptError):
    def __init__(self, message: str, location: str | None = None):
        super().__init__(message)
        self.location = location


class UnknownVariable(Hbd2CptError):
    pass


class NoFeedbackVars(Hbd2CptError):
    pass


class UnresolvedRef(Hbd2CptError):
    pass


class CycleError(Hbd2CptError):
    pass


class AlgebraicLoopError(Hbd2CptError):
    pass


class SpaceTooLarge(Hbd2CptError):
    pass


class SpaceMismatch(Hbd2CptError):
    pass


class PreconditionViolated(Hbd2CptError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class MissingParam(Hbd2CptError):
    pass


class DiagramSyntaxError(Hbd2CptError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        super().__init__(message)
        self.line = line
        self.col = col


class SchemaError(Hbd2CptError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class TextSyntaxError(Hbd2CptError):
    """Raised by the expression/term text parser."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos
