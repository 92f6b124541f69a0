"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ImattractError(Exception):
    """Base class for every error raised by this package."""


class ExprError(ImattractError):
    pass


class ExprSyntaxError(ExprError):
    """Malformed expression text.

    ``offset`` is a byte offset into the UTF-8 encoded source and
    ``expected`` the set of token kinds that would have been accepted.
    """

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int, allowed: frozenset[str] = frozenset()):
        self.name = name
        self.offset = offset
        self.allowed = frozenset(allowed)
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, reason: str, point: tuple[float, ...] | None = None):
        self.reason = reason
        self.point = point
        where = f" at {point}" if point is not None else ""
        super().__init__(f"{reason}{where}")


class GeometryError(ImattractError):
    pass


class EmptyManifold(GeometryError):
    pass


class SingularFrame(GeometryError):
    def __init__(self, point: tuple[float, float], reason: str = "degenerate gradient"):
        self.point = point
        super().__init__(f"{reason} at {point}")


class CriterionError(ImattractError):
    pass


class AllSamplesExcluded(CriterionError):
    pass


class EmptySide(CriterionError):
    pass


class InvarianceFailure(ImattractError):
    """Raised when classification is requested on a manifold that is not invariant."""


class ConfigError(ImattractError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)
