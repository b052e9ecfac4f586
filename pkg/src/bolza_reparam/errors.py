"""Exception hierarchy. Every domain error maps to CLI exit code 1."""

from __future__ import annotations


class BolzaError(Exception):
    """Base class for domain errors raised by the toolkit."""

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": self.message, "details": self.details}


class InvalidPair(BolzaError):
    pass


class PreconditionViolated(BolzaError):
    pass


class NoStructure(BolzaError):
    pass


class DomainEdge(BolzaError):
    pass


class NotFound(BolzaError):
    pass


class UnknownName(BolzaError):
    pass


class EmptySampleSet(BolzaError):
    """No admissible sample in the constraint set.

    The sentinel estimate (sup = -inf, inf = +inf) is attached as ``estimate``.
    """

    def __init__(self, message: str = "", estimate=None, **details):
        super().__init__(message, **details)
        self.estimate = estimate


class VariantInapplicable(BolzaError):
    pass


class MuInfeasible(BolzaError):
    pass


class RhoSearchFailed(BolzaError):
    pass


class CertificateRequired(BolzaError):
    pass


class InsufficientRoom(BolzaError):
    pass


class SlopeNonpositive(BolzaError):
    pass


class ConeViolation(BolzaError):
    pass


class CostRegression(BolzaError):
    pass


class NoAdmissiblePoint(BolzaError):
    pass


class ExpressionError(BolzaError):
    pass
