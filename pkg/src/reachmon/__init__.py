"""Predictive safety monitoring for linear control loops under sensor attacks.

The package splits into an offline and an online half.  Offline,
:func:`calibrate_kalman` fixes the steady-state estimator and
:func:`compute_certificate` solves a determinant-minimising matrix
inequality for an invariant ellipsoid bounding the estimation error.
Online, :func:`check_safety` propagates the estimate through the closed
loop, drags the certified ellipsoid along the predicted trajectory, and
reports the first step whose reach set touches an unsafe half-space.
"""

from .errors import (
    CalibrationError,
    CenterUnsafeError,
    CertificateError,
    ClassificationError,
    DimensionError,
    DomainError,
    ReachmonError,
    SchemaError,
)
from .estimation import (
    DelayedKalmanEstimator,
    KalmanCalibration,
    ResidualDetector,
    calibrate_kalman,
    chi_square_threshold,
)
from .geometry import (
    CONTAINED,
    EMPTY,
    Ellipsoid,
    HalfSpace,
    UnsafeSet,
    cap_shrink_factor,
    distance_to_hyperplane,
    intersects_unsafe,
    min_volume_intersection,
    volume,
)
from .monitor import (
    MetricsSeries,
    MonitorConfig,
    MonitorVerdict,
    baseline_metrics,
    check_safety,
    impact_metric,
    monitor_trace,
    time_to_unsafe,
    trailing_rate,
    verdicts_from_series,
)
from .plant import (
    AttackPlan,
    PIOutputController,
    PlantModel,
    StaticOutputController,
    StealthySynthesizer,
    Trace,
    replay_estimation,
    run_closed_loop,
)
from .reachability import (
    INFEASIBLE,
    NoiseEnergyBound,
    ReachCertificate,
    SolveResult,
    compute_certificate,
    instantiate_reach_set,
    noise_energy_bound,
    solve_invariance_program,
    stability_lmi,
    verify_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "AttackPlan",
    "CONTAINED",
    "CalibrationError",
    "CenterUnsafeError",
    "CertificateError",
    "ClassificationError",
    "DelayedKalmanEstimator",
    "DimensionError",
    "DomainError",
    "EMPTY",
    "Ellipsoid",
    "HalfSpace",
    "INFEASIBLE",
    "KalmanCalibration",
    "MetricsSeries",
    "MonitorConfig",
    "MonitorVerdict",
    "NoiseEnergyBound",
    "PIOutputController",
    "PlantModel",
    "ReachCertificate",
    "ReachmonError",
    "ResidualDetector",
    "SchemaError",
    "SolveResult",
    "StaticOutputController",
    "StealthySynthesizer",
    "Trace",
    "UnsafeSet",
    "baseline_metrics",
    "calibrate_kalman",
    "cap_shrink_factor",
    "check_safety",
    "chi_square_threshold",
    "compute_certificate",
    "distance_to_hyperplane",
    "impact_metric",
    "instantiate_reach_set",
    "intersects_unsafe",
    "min_volume_intersection",
    "monitor_trace",
    "noise_energy_bound",
    "replay_estimation",
    "run_closed_loop",
    "solve_invariance_program",
    "stability_lmi",
    "time_to_unsafe",
    "trailing_rate",
    "verdicts_from_series",
    "verify_certificate",
    "volume",
]
