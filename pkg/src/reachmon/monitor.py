"""Online K-step safety checking of the closed loop under attack.

Each monitoring step takes the current state estimate, rolls the
noise-free closed loop forward ``K`` steps, translates the certified
error ellipsoid to every predicted estimate, and tests the translated
ellipsoids against the unsafe half-spaces.  Because the ellipsoid shape
is constant, a half-space test reduces to an affine margin: with
``s_i = sqrt(c_i^T Pi c_i)`` precomputed per constraint, the predicted
set at offset ``l`` reaches half-space ``i`` exactly when

    c_i . x_pred(l) + s_i - b_i >= 0,

so a whole trace of monitoring steps can be checked with a handful of
stacked matrix products (see :func:`monitor_trace`).

The severity outputs follow the calculus in :mod:`reachmon.geometry`:
``impact`` is the worst determinant ratio of the covering ellipsoid of
the unsafe cap, and ``tc_seconds`` converts the first violating offset
to wall-clock time.  The traditional estimate-only metrics ``d_u`` and
``t_u`` (distance over recent speed) are carried alongside for
comparison studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .geometry import UnsafeSet, cap_shrink_factor
from .plant import PlantModel
from .reachability import ReachCertificate

__all__ = [
    "MonitorConfig",
    "MonitorVerdict",
    "MetricsSeries",
    "ClosedLoopPredictor",
    "predict_control_flow",
    "check_safety",
    "impact_metric",
    "time_to_unsafe",
    "baseline_metrics",
    "trailing_rate",
    "monitor_trace",
    "verdicts_from_series",
]


def predict_control_flow(model: PlantModel, controller, x_hat: np.ndarray) -> np.ndarray:
    """One noise-free closed-loop prediction step.

    Applies the control law to the predicted output and advances the
    plant model: ``u = law(C x_hat)``, ``x_next = A x_hat + B u``.  The
    controller's internal state (if any) advances alongside, so passing
    a live controller mutates it — hand a copy when probing ahead.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    u = controller.act(model.c @ x_hat)
    return model.a @ x_hat + model.b @ u


class ClosedLoopPredictor:
    """Precomputed affine rollout of the augmented closed loop.

    Stores ``M^l`` and the accumulated offsets for ``l = 0..k_max`` so a
    K-step predicted state trajectory is one stacked product instead of
    K sequential multiplies.
    """

    def __init__(self, model: PlantModel, controller, k_max: int):
        if k_max < 0:
            raise DomainError("prediction horizon must be nonnegative")
        m_aug, v0 = controller.augmented_dynamics(model)
        d = m_aug.shape[0]
        powers = np.empty((k_max + 1, d, d))
        offsets = np.zeros((k_max + 1, d))
        powers[0] = np.eye(d)
        for l in range(1, k_max + 1):
            powers[l] = m_aug @ powers[l - 1]
            offsets[l] = m_aug @ offsets[l - 1] + v0
        self.powers = powers
        self.offsets = offsets
        self.n_states = model.n_states
        self.aug_dim = d
        self.k_max = k_max

    def states(self, z0: np.ndarray, k: int) -> np.ndarray:
        """Predicted plant states for offsets 0..k from augmented start z0."""
        if k > self.k_max:
            raise DomainError(f"horizon {k} exceeds precomputed {self.k_max}")
        z0 = np.asarray(z0, dtype=float)
        traj = self.powers[: k + 1] @ z0 + self.offsets[: k + 1]
        return traj[:, : self.n_states]


@dataclass(eq=False)
class MonitorConfig:
    """Everything one monitoring step needs, with rollout precomputation."""

    model: PlantModel
    controller: object
    cert: ReachCertificate
    unsafe: UnsafeSet
    k_horizon: int
    early_exit: bool = True
    rate_window: int = 100
    predictor: ClosedLoopPredictor = field(init=False, repr=False)
    _sups: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.model.n_states
        if self.cert.n != n:
            raise DimensionError(f"certificate is {self.cert.n}-dimensional, plant is {n}")
        if len(self.unsafe) and self.unsafe.dim != n:
            raise DimensionError(f"unsafe set is {self.unsafe.dim}-dimensional, plant is {n}")
        if self.k_horizon < 0:
            raise DomainError("prediction horizon must be nonnegative")
        if self.rate_window < 1:
            raise DomainError("rate window must be at least 1 step")
        self.predictor = ClosedLoopPredictor(self.model, self.controller, self.k_horizon)
        if len(self.unsafe):
            # Support length of the certified ellipsoid along each normal;
            # constant across the horizon because the shape is.
            self._sups = np.sqrt(
                np.einsum("ij,jk,ik->i", self.unsafe.normals, self.cert.pi,
                          self.unsafe.normals)
            )
        else:
            self._sups = np.zeros(0)


@dataclass(frozen=True, eq=False)
class MonitorVerdict:
    """Outcome of one monitoring step.

    ``safe`` is false exactly when ``k_f`` (the first violating
    prediction offset) and ``tc_seconds`` are set.  ``center_unsafe``
    distinguishes "the estimate itself is already in the unsafe set"
    from an ellipsoid-overlap violation.  ``per_step_min_distance``
    holds the worst clearance at each checked offset — truncated at the
    violation when early exit is on.
    """

    safe: bool
    k_f: int | None
    violated_constraint: int | None
    center_unsafe: bool
    tc_seconds: float | None
    impact: float
    per_step_min_distance: tuple[float, ...]
    baseline_du: float
    baseline_tu: float | None


def time_to_unsafe(k_f_offset: int, dt: float) -> float:
    """Seconds until the predicted reach set first goes unsafe."""
    if k_f_offset < 0:
        raise DomainError("offset must be nonnegative")
    return float(k_f_offset) * float(dt)


def impact_metric(cert: ReachCertificate, x_hat_at_kf: np.ndarray, unsafe: UnsafeSet) -> float:
    """Severity in [0, 1]: worst cap-cover determinant ratio over constraints."""
    if not len(unsafe):
        return 0.0
    x = np.asarray(x_hat_at_kf, dtype=float)
    sups = np.sqrt(
        np.einsum("ij,jk,ik->i", unsafe.normals, cert.pi, unsafe.normals)
    )
    alphas = (unsafe.normals @ x - unsafe.offsets) / sups
    best = max(cap_shrink_factor(float(al), cert.n) for al in alphas)
    return min(max(best, 0.0), 1.0)


def baseline_metrics(
    x_hat: np.ndarray, unsafe: UnsafeSet, rate: float | None
) -> tuple[float, float | None]:
    """Traditional estimate-only metrics (d_u, t_u).

    ``d_u`` is the Euclidean distance of the estimate to the unsafe
    union (zero inside); ``t_u = d_u / rate`` with ``rate`` the caller's
    trailing average state speed, undefined when the plant is not
    moving.
    """
    if not len(unsafe):
        return math.inf, None
    x = np.asarray(x_hat, dtype=float)
    gaps = (unsafe.offsets - unsafe.normals @ x) / unsafe.norms
    d_u = float(max(np.min(gaps), 0.0))
    if rate is None or rate < 1e-12:
        return d_u, None
    return d_u, d_u / rate


def trailing_rate(xhat: np.ndarray, dt: float, window: int = 100) -> np.ndarray:
    """Average estimate speed ||xhat(j) - xhat(j-1)||/dt over a trailing window.

    Entry k averages the step lengths ending at steps max(1, k-window+1)
    .. k; entry 0 is zero (no step has completed yet).
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    steps = np.linalg.norm(np.diff(xhat, axis=0), axis=1) / dt
    csum = np.concatenate([[0.0], np.cumsum(steps)])
    t = xhat.shape[0]
    out = np.zeros(t)
    for k in range(1, t):
        lo = max(0, k - window)
        out[k] = (csum[k] - csum[lo]) / (k - lo)
    return out


def check_safety(cfg: MonitorConfig, x_hat: np.ndarray, *, rate: float | None = None) -> MonitorVerdict:
    """Run one monitoring step: predict, instantiate, test, score.

    Pure function of its inputs (the controller's internal state is
    read, not advanced).  Returns the safe verdict when no predicted
    reach set within the horizon touches the unsafe union, else the
    first-violation verdict with its severity metrics.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (cfg.model.n_states,):
        raise DimensionError(
            f"estimate has shape {x_hat.shape}, expected ({cfg.model.n_states},)"
        )
    d_u, t_u = baseline_metrics(x_hat, cfg.unsafe, rate)
    if not len(cfg.unsafe):
        return MonitorVerdict(
            safe=True, k_f=None, violated_constraint=None, center_unsafe=False,
            tc_seconds=None, impact=0.0,
            per_step_min_distance=(math.inf,) * (cfg.k_horizon + 1),
            baseline_du=d_u, baseline_tu=t_u,
        )

    z0 = cfg.controller.augment_state(x_hat)
    states = cfg.predictor.states(z0, cfg.k_horizon)  # (K+1, n)
    raw = states @ cfg.unsafe.normals.T - cfg.unsafe.offsets  # center margin
    clear = -(raw + cfg._sups) / cfg.unsafe.norms
    per_step_min = clear.min(axis=1)
    violated = np.flatnonzero(per_step_min <= 0.0)
    center_unsafe = bool((raw[0] >= 0.0).any())

    if violated.size == 0:
        return MonitorVerdict(
            safe=True, k_f=None, violated_constraint=None, center_unsafe=False,
            tc_seconds=None, impact=0.0,
            per_step_min_distance=tuple(per_step_min),
            baseline_du=d_u, baseline_tu=t_u,
        )

    k_f = int(violated[0])
    hit = np.flatnonzero(clear[k_f] <= 0.0)
    profile = per_step_min[: k_f + 1] if cfg.early_exit else per_step_min
    return MonitorVerdict(
        safe=False, k_f=k_f, violated_constraint=int(hit[0]),
        center_unsafe=center_unsafe,
        tc_seconds=time_to_unsafe(k_f, cfg.model.dt),
        impact=impact_metric(cfg.cert, states[k_f], cfg.unsafe),
        per_step_min_distance=tuple(profile),
        baseline_du=d_u, baseline_tu=t_u,
    )


@dataclass(eq=False)
class MetricsSeries:
    """Per-monitoring-step metric arrays for a whole trace.

    ``k_f`` is -1 where safe; ``t_u`` is NaN where undefined; ``tc`` is
    NaN where safe.  ``profiles`` (optional) holds the per-offset worst
    clearance rows used to reconstruct full verdicts.
    """

    safe: np.ndarray
    k_f: np.ndarray
    violated_constraint: np.ndarray
    center_unsafe: np.ndarray
    tc_seconds: np.ndarray
    impact: np.ndarray
    min_distance: np.ndarray
    d_u: np.ndarray
    t_u: np.ndarray
    rate: np.ndarray
    profiles: np.ndarray | None = None

    def __len__(self) -> int:
        return self.safe.shape[0]

    def warning_step(self, k_max: int | None = None) -> int | None:
        """First step whose violation offset fits the given horizon."""
        k_f = self.k_f
        mask = k_f >= 0
        if k_max is not None:
            mask &= k_f <= k_max
        hits = np.flatnonzero(mask)
        return int(hits[0]) if hits.size else None


def _shrink_factors(alphas: np.ndarray, n: int) -> np.ndarray:
    """Vectorised cap-cover determinant ratio (matches cap_shrink_factor)."""
    a = np.asarray(alphas, dtype=float)
    if n == 1:
        half = 0.5 * (1.0 + np.minimum(a, 1.0))
        out = half * half
        return np.where(a <= -1.0, 0.0, np.where(a >= 1.0, 1.0, out))
    with np.errstate(divide="ignore", invalid="ignore"):
        base = (n * n * (1.0 - a * a)) / (n * n - 1.0)
        tail = (n - 1.0) * (1.0 + a) / ((n + 1.0) * (1.0 - a))
        deep = (base**n) * tail
    out = np.where(a > 1.0 / n, 1.0, deep)
    out = np.where(a >= 1.0, 1.0, out)
    out = np.where(a <= -1.0, 0.0, out)
    return np.clip(out, 0.0, 1.0)


def monitor_trace(
    cfg: MonitorConfig,
    xhat: np.ndarray,
    ybar: np.ndarray | None = None,
    *,
    keep_profiles: bool = False,
) -> MetricsSeries:
    """Run the monitor over every step of a recorded estimate trajectory.

    Equivalent to calling :func:`check_safety` at each step with the
    controller state replayed from ``ybar`` (required for controllers
    with internal state), but batched: the predicted-state stack for all
    monitoring steps at one offset is a single matrix product, so cost
    grows linearly in horizon x trace length with small constants.
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    t = xhat.shape[0]
    internal = cfg.controller.internal_trajectory(
        np.zeros((t, cfg.model.n_sensors)) if ybar is None else np.asarray(ybar, float)
    )
    # augment_state(xhat(k)) uses the controller state *after* step k-1:
    # shift the replayed internal trajectory by one.
    if internal.shape[1]:
        lagged = np.vstack([np.zeros((1, internal.shape[1])), internal[:-1]])
        z0 = np.hstack([xhat, lagged])
    else:
        z0 = xhat

    rates = trailing_rate(xhat, cfg.model.dt, cfg.rate_window)
    empty = not len(cfg.unsafe)
    k_hor = cfg.k_horizon
    safe = np.ones(t, dtype=bool)
    k_f = np.full(t, -1, dtype=int)
    vio = np.full(t, -1, dtype=int)
    center_unsafe = np.zeros(t, dtype=bool)
    min_dist = np.full(t, math.inf)
    impact = np.zeros(t)
    tc = np.full(t, math.nan)
    x_star = np.zeros((t, cfg.model.n_states))
    profiles = np.full((t, k_hor + 1), math.inf) if keep_profiles else None

    if not empty:
        normals_t = cfg.unsafe.normals.T
        offsets = cfg.unsafe.offsets
        norms = cfg.unsafe.norms
        n_states = cfg.model.n_states
        for l in range(k_hor + 1):
            block = cfg.predictor.powers[l][:n_states]
            states_l = z0 @ block.T + cfg.predictor.offsets[l][:n_states]
            raw = states_l @ normals_t - offsets
            clear_min = (-(raw + cfg._sups) / norms).min(axis=1)
            if profiles is not None:
                profiles[:, l] = clear_min
            if l == 0:
                center_unsafe = (raw >= 0.0).any(axis=1)
            upd = safe if cfg.early_exit else slice(None)
            min_dist[upd] = np.minimum(min_dist[upd], clear_min[upd])
            hit = safe & (clear_min <= 0.0)
            if hit.any():
                idx = np.flatnonzero(hit)
                safe[idx] = False
                k_f[idx] = l
                first_c = np.argmax((raw[idx] + cfg._sups) >= 0.0, axis=1)
                vio[idx] = first_c
                x_star[idx] = states_l[idx]
        bad = np.flatnonzero(~safe)
        if bad.size:
            sups = cfg._sups
            alphas = (x_star[bad] @ normals_t - offsets) / sups
            impact[bad] = np.clip(_shrink_factors(alphas, cfg.cert.n).max(axis=1), 0.0, 1.0)
            tc[bad] = k_f[bad] * cfg.model.dt
        gaps = (offsets - xhat @ normals_t) / norms
        d_u = np.maximum(gaps.min(axis=1), 0.0)
    else:
        d_u = np.full(t, math.inf)

    if empty:
        # No unsafe set: both baseline metrics are undefined, matching
        # the early return of check_safety.
        t_u = np.full(t, math.nan)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_u = np.where(rates >= 1e-12, d_u / rates, math.nan)
    return MetricsSeries(
        safe=safe, k_f=k_f, violated_constraint=vio, center_unsafe=center_unsafe,
        tc_seconds=tc, impact=impact, min_distance=min_dist, d_u=d_u, t_u=t_u,
        rate=rates, profiles=profiles,
    )


def verdicts_from_series(cfg: MonitorConfig, series: MetricsSeries):
    """Expand a batched metrics series back into per-step verdicts.

    Requires the series to have been produced with ``keep_profiles=True``;
    yields ``(k, MonitorVerdict)`` pairs matching what
    :func:`check_safety` would have returned step by step.
    """
    if series.profiles is None:
        raise DomainError("series was computed without per-offset profiles")
    for k in range(len(series)):
        safe = bool(series.safe[k])
        k_f = None if safe else int(series.k_f[k])
        profile = series.profiles[k]
        if not safe and cfg.early_exit:
            profile = profile[: k_f + 1]
        t_u = float(series.t_u[k])
        yield k, MonitorVerdict(
            safe=safe,
            k_f=k_f,
            violated_constraint=None if safe else int(series.violated_constraint[k]),
            center_unsafe=bool(series.center_unsafe[k]),
            tc_seconds=None if safe else float(series.tc_seconds[k]),
            impact=float(series.impact[k]),
            per_step_min_distance=tuple(profile),
            baseline_du=float(series.d_u[k]),
            baseline_tu=None if math.isnan(t_u) else t_u,
        )
