"""Exception types shared across the package."""

from __future__ import annotations


class ReachmonError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ReachmonError):
    """Operands have incompatible shapes or dimensions."""


class DomainError(ReachmonError):
    """A scalar parameter is outside its admissible range."""


class CenterUnsafeError(ReachmonError):
    """An ellipsoid center lies inside the unsafe set where the caller
    promised it would not."""

    def __init__(self, message: str, constraint_index: int | None = None):
        super().__init__(message)
        self.constraint_index = constraint_index


class CalibrationError(ReachmonError):
    """Estimator calibration failed (divergent Riccati iteration,
    unstable estimation loop, or inadmissible noise covariances)."""


class CertificateError(ReachmonError):
    """A reachability certificate could not be produced or failed
    verification (infeasible program, fingerprint mismatch, or a stored
    shape matrix that no longer satisfies its matrix inequality)."""


class SchemaError(ReachmonError):
    """A JSON/CSV document does not match its documented schema."""


class ClassificationError(ReachmonError):
    """A Monte Carlo trial could not be classified because its ground
    truth (the true state trajectory) is missing or incomplete."""
