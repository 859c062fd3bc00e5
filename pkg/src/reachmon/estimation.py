"""Steady-state Kalman filtering and residual-based anomaly detection.

Calibration solves the filter Riccati equation for the plant

    x(k+1) = A x(k) + B u(k) + w(k),      w ~ N(0, W)
    y(k)   = C x(k) + v(k),               v ~ N(0, V)

by fixed-point iteration on the prior covariance, yielding the
steady-state gain ``L``, the innovation covariance ``S = C P C^T + V``,
and the closed-loop estimator matrix ``A - L C``.

The estimator runs in one-step-delayed innovation form: the state
estimate at time k uses measurements up to k-1,

    xhat(k) = A xhat(k-1) + B u(k-1) + L (y(k-1) - C xhat(k-1)),

so the residual ``r(k) = y(k) - C xhat(k)`` is the innovation of the
prediction step and has covariance ``S`` in steady state.  The detector
scores ``z = r^T S^{-1} r`` against the chi-square quantile with as many
degrees of freedom as there are sensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CalibrationError, DimensionError, DomainError
from .linalg import as_matrix, check_symmetric, is_positive_semidefinite, spectral_radius

__all__ = [
    "KalmanCalibration",
    "calibrate_kalman",
    "chi_square_threshold",
    "ResidualDetector",
    "DelayedKalmanEstimator",
]

_RICCATI_TOL = 1e-12
_RICCATI_MAX_ITER = 1_000_000


@dataclass(frozen=True, eq=False)
class KalmanCalibration:
    """Steady-state filter quantities for one plant.

    Attributes:
        gain: steady-state Kalman gain ``L`` (n x m).
        innovation_cov: innovation covariance ``S`` (m x m), SPD.
        prior_cov: steady-state prior state covariance (n x n).
        estimator_radius: spectral radius of ``A - L C``.
    """

    gain: np.ndarray
    innovation_cov: np.ndarray
    prior_cov: np.ndarray
    estimator_radius: float


def calibrate_kalman(
    a: np.ndarray,
    c: np.ndarray,
    process_cov: np.ndarray,
    measurement_cov: np.ndarray,
    *,
    tol: float = _RICCATI_TOL,
    max_iter: int = _RICCATI_MAX_ITER,
) -> KalmanCalibration:
    """Solve the steady-state filter Riccati equation by iteration.

    Iterates ``P <- A (P - P C^T (C P C^T + V)^{-1} C P) A^T + W`` from
    ``P = W`` until the Frobenius norm of the update falls below
    ``tol``.  Requires the resulting estimator to be stable.

    Raises:
        CalibrationError: if the iteration does not settle within
            ``max_iter`` sweeps, the innovation covariance is singular,
            or the estimator ``A - L C`` is not a strict contraction.
    """
    a = as_matrix(a, name="A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"A must be square, got {a.shape}")
    c = as_matrix(c, name="C")
    if c.shape[1] != n:
        raise DimensionError(f"C has {c.shape[1]} columns, expected {n}")
    m = c.shape[0]
    w = check_symmetric(as_matrix(process_cov, (n, n), "process_cov"), "process_cov")
    v = check_symmetric(
        as_matrix(measurement_cov, (m, m), "measurement_cov"), "measurement_cov"
    )
    if not is_positive_semidefinite(w):
        raise CalibrationError("process covariance must be PSD")
    if not is_positive_semidefinite(v):
        raise CalibrationError("measurement covariance must be PSD")

    p = w.copy()
    for _ in range(max_iter):
        innov = c @ p @ c.T + v
        try:
            gain_t = np.linalg.solve(innov, c @ p)  # S^{-1} C P
        except np.linalg.LinAlgError as exc:
            raise CalibrationError("innovation covariance is singular") from exc
        p_next = a @ (p - p @ c.T @ gain_t) @ a.T + w
        p_next = 0.5 * (p_next + p_next.T)
        if not np.all(np.isfinite(p_next)) or np.linalg.norm(p_next) > 1e14:
            raise CalibrationError(
                "Riccati iteration diverged (model likely undetectable)"
            )
        if np.linalg.norm(p_next - p) <= tol:
            p = p_next
            break
        p = p_next
    else:
        raise CalibrationError(
            f"Riccati iteration did not converge in {max_iter} sweeps"
        )

    innov = c @ p @ c.T + v
    innov = 0.5 * (innov + innov.T)
    try:
        np.linalg.cholesky(innov)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError("steady-state innovation covariance is singular") from exc
    gain = a @ p @ c.T @ np.linalg.inv(innov)
    radius = spectral_radius(a - gain @ c)
    if radius >= 1.0:
        raise CalibrationError(
            f"estimator A - L C has spectral radius {radius:.6f} >= 1"
        )
    return KalmanCalibration(
        gain=gain, innovation_cov=innov, prior_cov=p, estimator_radius=radius
    )


def chi_square_threshold(num_sensors: int, false_alarm_rate: float) -> float:
    """Detector threshold: chi-square quantile at ``1 - false_alarm_rate``.

    ``num_sensors`` is the degrees of freedom; a nominal residual score
    exceeds the returned value with probability ``false_alarm_rate``.
    """
    if not 0.0 < false_alarm_rate < 1.0:
        raise DomainError(
            f"false alarm rate must be in (0, 1), got {false_alarm_rate}"
        )
    if num_sensors < 1:
        raise DimensionError("need at least one sensor")
    return float(stats.chi2.ppf(1.0 - false_alarm_rate, df=num_sensors))


@dataclass(eq=False)
class ResidualDetector:
    """Chi-square residual scorer with a fixed threshold."""

    innovation_cov: np.ndarray
    threshold: float
    _solve: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = check_symmetric(self.innovation_cov, "innovation_cov")
        self.innovation_cov = s
        self._solve = np.linalg.inv(s)

    def score(self, residual: np.ndarray) -> float:
        r = np.asarray(residual, dtype=float)
        return float(r @ self._solve @ r)

    def is_alarm(self, residual: np.ndarray) -> bool:
        return self.score(residual) > self.threshold


class DelayedKalmanEstimator:
    """One-step-delayed innovation estimator.

    The estimate ``xhat(k)`` is a function of measurements through
    ``k-1``; :meth:`advance` folds in the measurement and input of the
    previous step and returns the new estimate.  Feeding the estimator
    attacked measurements yields the attacker-visible estimate.
    """

    def __init__(
        self,
        a: np.ndarray,
        b: np.ndarray,
        c: np.ndarray,
        gain: np.ndarray,
        x0: np.ndarray | None = None,
    ):
        self.a = as_matrix(a, name="A")
        n = self.a.shape[0]
        self.b = as_matrix(b, name="B")
        if self.b.shape[0] != n:
            raise DimensionError(f"B has {self.b.shape[0]} rows, expected {n}")
        self.c = as_matrix(c, name="C")
        self.gain = as_matrix(gain, (n, self.c.shape[0]), "gain")
        self.xhat = (
            np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
        )

    @property
    def predicted_output(self) -> np.ndarray:
        return self.c @ self.xhat

    def advance(self, y_prev: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        """Fold in step-(k-1) data, return ``xhat(k)``."""
        innovation = np.asarray(y_prev, dtype=float) - self.c @ self.xhat
        self.xhat = self.a @ self.xhat + self.b @ np.asarray(u_prev, float) + self.gain @ innovation
        return self.xhat
