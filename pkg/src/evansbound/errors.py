"""Exception hierarchy.

User-facing problems (bad input, malformed files) derive from
:class:`UserError`; failures of the numerics derive from
:class:`NumericalError`. The CLI maps the two families to exit codes 1 and 2.
"""

from __future__ import annotations


class EvansError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def record(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class UserError(EvansError, ValueError):
    kind = "user-error"


class NumericalError(EvansError, ArithmeticError):
    kind = "numerical-error"


class ExprSyntaxError(UserError):
    """Syntax error in a coefficient expression, with a byte offset."""

    kind = "syntax-error"

    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source

    def record(self) -> dict:
        return {**super().record(), "offset": self.offset}


class UnknownIdentifierError(UserError):
    kind = "unknown-identifier"

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset

    def record(self) -> dict:
        return {**super().record(), "identifier": self.name}


class DomainError(UserError):
    kind = "domain-error"


class ProblemError(UserError):
    """Schema violation in a problem description; ``path`` locates the key."""

    kind = "problem-error"

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path

    def record(self) -> dict:
        return {**super().record(), "path": self.path}


class RankDeficientError(UserError):
    kind = "rank-deficient"


class IntegrationError(NumericalError):
    """Step size underflow in the ODE integrator."""

    kind = "integration-failure"

    def __init__(self, message: str, x: float):
        super().__init__(f"{message} at x={x!r}")
        self.x = x

    def record(self) -> dict:
        return {**super().record(), "x": self.x}


class QuadratureError(NumericalError):
    kind = "quadrature-nonconvergence"

    def __init__(self, coarse: float, fine: float):
        super().__init__(
            f"quadrature levels disagree: {coarse!r} vs {fine!r}")
        self.coarse = coarse
        self.fine = fine

    def record(self) -> dict:
        return {**super().record(), "coarse": self.coarse, "fine": self.fine}


class SignChangeError(NumericalError):
    """The real Evans function changed sign during a monotone sweep."""

    kind = "sign-change"


class AmbiguousCountError(NumericalError):
    kind = "ambiguous-count"


class ContourError(NumericalError):
    """The Evans function (nearly) vanishes on an integration contour."""

    kind = "zero-on-contour"


class CoverageGapError(NumericalError):
    kind = "coverage-gap"

    def __init__(self, lo: float, hi: float):
        super().__init__(f"diamonds leave the mu interval ({lo!r}, {hi!r}) uncovered")
        self.gap = (lo, hi)

    def record(self) -> dict:
        return {**super().record(), "gap": list(self.gap)}
