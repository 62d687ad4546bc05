"""Exception hierarchy shared by every ellrisk module.

Every domain error carries a stable ``code`` string so the CLI can emit it in
machine-readable form.
"""

from __future__ import annotations


class EllRiskError(Exception):
    """Base class for all domain errors raised by ellrisk."""

    code = "EllRiskError"


class ShapeConstraintViolated(EllRiskError, ValueError):
    code = "ShapeConstraintViolated"


class NegativeArgument(EllRiskError, ValueError):
    code = "NegativeArgument"


class IntegralDiverged(EllRiskError, ArithmeticError):
    code = "IntegralDiverged"


class DomainError(EllRiskError, ValueError):
    code = "DomainError"


class DimensionMismatch(EllRiskError, ValueError):
    code = "DimensionMismatch"


class NotPositiveDefinite(EllRiskError, ValueError):
    code = "NotPositiveDefinite"


class RootNotBracketed(EllRiskError, ArithmeticError):
    code = "RootNotBracketed"


class InvalidBand(EllRiskError, ValueError):
    """Probability levels are out of range or not ordered (p_k >= q_k)."""

    code = "InvalidBand"


class BandInvertedAfterStandardization(EllRiskError, ValueError):
    """Sigma^{-1/2} mapped the VaR box to bounds with eta_p >= eta_q."""

    code = "BandInvertedAfterStandardization"


class EmptyBand(EllRiskError, ValueError):
    code = "EmptyBand"


class DegenerateVariance(EllRiskError, ValueError):
    code = "DegenerateVariance"


class DimensionTooSmall(EllRiskError, ValueError):
    code = "DimensionTooSmall"


class SingularCovariance(EllRiskError, ValueError):
    code = "SingularCovariance"


class InsufficientData(EllRiskError, ValueError):
    code = "InsufficientData"


class TooFewAccepted(EllRiskError, RuntimeError):
    code = "TooFewAccepted"


class ParseError(EllRiskError, ValueError):
    code = "ParseError"


class AccuracyNotReached(EllRiskError, RuntimeError):
    """Integration budget exhausted before the requested accuracy was met."""

    code = "AccuracyNotReached"
