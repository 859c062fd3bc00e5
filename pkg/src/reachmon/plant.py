"""Closed-loop plant simulation with sensor-channel attack injection.

The simulated loop is the discrete LTI plant

    x(k+1) = A x(k) + B u(k) + w(k)
    y(k)   = C x(k) + v(k)

under output feedback computed from the *received* measurements
``ybar(k) = y(k) + delta(k)``, where ``delta`` is chosen by an attacker
with full knowledge of the loop.  Per step ``k`` the order of events is
fixed (and is what makes traces reproducible):

    1. estimator update: xhat(k) from (ybar(k-1), u(k-1));
    2. plant output y(k) = C x(k) + v(k);
    3. attack synthesis delta(k) from the true innovation;
    4. detector score on ybar(k) - C xhat(k);
    5. control u(k) from ybar(k);
    6. state update x(k+1) = A x(k) + B u(k) + w(k).

Process and measurement noise are drawn from one generator stream and
attack randomness (alarm mimicry) from a second, independently spawned
stream, so a run with an empty attack window is bit-identical to an
attack-free run under the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DomainError
from .estimation import DelayedKalmanEstimator, KalmanCalibration, ResidualDetector
from .linalg import (
    as_matrix,
    as_vector,
    check_symmetric,
    is_positive_semidefinite,
    noise_factor,
    sym_sqrt_psd,
)

__all__ = [
    "PlantModel",
    "StaticOutputController",
    "PIOutputController",
    "AttackPlan",
    "StealthySynthesizer",
    "Trace",
    "run_closed_loop",
    "replay_estimation",
    "STEALTH_MARGIN",
    "MIMIC_OVERSHOOT",
]

# Non-mimicry steps keep the whitened residual at or below
# sqrt(tau) * (1 - STEALTH_MARGIN); mimicry steps push it to
# sqrt(tau) * MIMIC_OVERSHOOT so the alarm fires deterministically.
STEALTH_MARGIN = 0.01
MIMIC_OVERSHOOT = 1.1


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Discrete-time LTI plant with Gaussian process/measurement noise."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    process_cov: np.ndarray
    measurement_cov: np.ndarray
    dt: float

    def __post_init__(self):
        a = as_matrix(self.a, name="A")
        n = a.shape[0]
        if a.shape != (n, n):
            raise DimensionError(f"A must be square, got {a.shape}")
        b = as_matrix(self.b, name="B")
        if b.ndim != 2 or b.shape[0] != n:
            raise DimensionError(f"B has shape {b.shape}, expected ({n}, inputs)")
        c = as_matrix(self.c, name="C")
        if c.ndim != 2 or c.shape[1] != n:
            raise DimensionError(f"C has shape {c.shape}, expected (sensors, {n})")
        m = c.shape[0]
        w = check_symmetric(as_matrix(self.process_cov, (n, n), "process_cov"), "process_cov")
        v = check_symmetric(
            as_matrix(self.measurement_cov, (m, m), "measurement_cov"), "measurement_cov"
        )
        if not is_positive_semidefinite(w):
            raise DomainError("process covariance must be PSD")
        if not is_positive_semidefinite(v):
            raise DomainError("measurement covariance must be PSD")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"sampling period must be positive, got {self.dt}")
        for arr in (a, b, c, w, v):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "process_cov", w)
        object.__setattr__(self, "measurement_cov", v)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_sensors(self) -> int:
        return self.c.shape[0]


class StaticOutputController:
    """Static output feedback ``u = G (y - reference)``."""

    def __init__(self, gain: np.ndarray, reference: np.ndarray | None = None):
        self.gain = as_matrix(gain, name="gain")
        m = self.gain.shape[1]
        self.reference = (
            np.zeros(m) if reference is None else as_vector(reference, m, "reference")
        )

    def reset(self) -> None:
        pass

    def act(self, y: np.ndarray) -> np.ndarray:
        return self.gain @ (np.asarray(y, dtype=float) - self.reference)

    # --- noise-free closed-loop prediction interface -------------------
    #
    # The monitor propagates an augmented state z through z+ = M z + v0,
    # where z starts from augment_state(xhat) and the plant state is the
    # first n components.  A static law needs no augmentation.

    def augmented_dynamics(self, model: PlantModel) -> tuple[np.ndarray, np.ndarray]:
        m_cl = model.a + model.b @ self.gain @ model.c
        v0 = -model.b @ (self.gain @ self.reference)
        return m_cl, v0

    def augment_state(self, xhat: np.ndarray) -> np.ndarray:
        return np.asarray(xhat, dtype=float)

    def internal_trajectory(self, ybar: np.ndarray) -> np.ndarray:
        return np.zeros((ybar.shape[0], 0))


class PIOutputController:
    """Output-error PI law ``u = Kp e + Ki s`` with ``s += dt * e``.

    The integrator is folded in *before* the proportional term is
    applied, so ``act`` at step k uses the integral including the step-k
    error.  ``augmented_dynamics`` exposes the matching affine map on
    the augmented state ``z = [x; s]``.
    """

    def __init__(
        self,
        kp: np.ndarray,
        ki: np.ndarray,
        dt: float,
        reference: np.ndarray | None = None,
    ):
        self.kp = as_matrix(kp, name="kp")
        self.ki = as_matrix(ki, self.kp.shape, "ki")
        if dt <= 0:
            raise DomainError("controller dt must be positive")
        self.dt = float(dt)
        m = self.kp.shape[1]
        self.reference = (
            np.zeros(m) if reference is None else as_vector(reference, m, "reference")
        )
        self._integral = np.zeros(m)

    def reset(self) -> None:
        self._integral = np.zeros(self.kp.shape[1])

    def act(self, y: np.ndarray) -> np.ndarray:
        err = self.reference - np.asarray(y, dtype=float)
        self._integral = self._integral + self.dt * err
        return self.kp @ err + self.ki @ self._integral

    def augmented_dynamics(self, model: PlantModel) -> tuple[np.ndarray, np.ndarray]:
        a, b, c = model.a, model.b, model.c
        n, m = model.n_states, model.n_sensors
        keff = self.kp + self.dt * self.ki
        m_cl = np.zeros((n + m, n + m))
        m_cl[:n, :n] = a - b @ keff @ c
        m_cl[:n, n:] = b @ self.ki
        m_cl[n:, :n] = -self.dt * c
        m_cl[n:, n:] = np.eye(m)
        v0 = np.concatenate([b @ (keff @ self.reference), self.dt * self.reference])
        return m_cl, v0

    def augment_state(self, xhat: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(xhat, dtype=float), self._integral])

    def internal_trajectory(self, ybar: np.ndarray) -> np.ndarray:
        """Integrator value *after* act() at each step of a replayed run."""
        err = self.reference[None, :] - np.asarray(ybar, dtype=float)
        return self.dt * np.cumsum(err, axis=0)


@dataclass(frozen=True)
class AttackPlan:
    """Sensor-attack schedule over the half-open window [start, end).

    strategy:
        ``"none"`` — no injection; ``"growing_bias"`` — ramp of slope
        ``rate`` (output units per step) added to the targeted sensors'
        innovation; ``"residual_steering"`` — hold the received
        innovation at a fixed point of whitened magnitude ``scale``
        along ``direction`` (sensor space; defaults to the indicator of
        the targeted sensors).
    alarm_mimic_rate:
        per-active-step probability of deliberately tripping the
        detector, so the attack's alarm statistics look nominal.
    """

    strategy: str = "none"
    start: int = 0
    end: int = 0
    sensors: tuple[int, ...] = ()
    rate: float = 0.0
    scale: float = 0.0
    direction: tuple[float, ...] | None = None
    alarm_mimic_rate: float = 0.0

    def __post_init__(self):
        if self.strategy not in ("none", "growing_bias", "residual_steering"):
            raise DomainError(f"unknown attack strategy {self.strategy!r}")
        if not 0.0 <= self.alarm_mimic_rate <= 1.0:
            raise DomainError("alarm_mimic_rate must lie in [0, 1]")
        object.__setattr__(self, "sensors", tuple(int(s) for s in self.sensors))

    def active(self, k: int) -> bool:
        return self.strategy != "none" and self.start <= k < self.end

    def with_sensors(self, sensors) -> "AttackPlan":
        return replace(self, sensors=tuple(int(s) for s in sensors))


class StealthySynthesizer:
    """Full-knowledge attacker shaping the received innovation.

    Given the true innovation ``r(k) = y(k) - C xhat(k)``, the attacker
    picks ``delta(k)`` so the detector sees ``rbar = r + delta`` equal
    to a strategy-dependent target, clipped into the stealth shell
    ``||S^{-1/2} rbar|| <= sqrt(tau) (1 - margin)`` — except on mimicry
    steps, where the target is scaled just past the threshold instead.
    """

    def __init__(
        self,
        plan: AttackPlan,
        innovation_cov: np.ndarray,
        threshold: float,
        rng: np.random.Generator,
    ):
        self.plan = plan
        self.rng = rng
        self.threshold = float(threshold)
        s = check_symmetric(innovation_cov, "innovation_cov")
        self._half = sym_sqrt_psd(s)
        self._half_inv = np.linalg.inv(self._half)
        m = s.shape[0]
        if plan.strategy != "none":
            if not plan.sensors:
                raise DomainError("attack plan has no target sensors")
            if max(plan.sensors) >= m or min(plan.sensors) < 0:
                raise DomainError(f"sensor indices {plan.sensors} out of range for m={m}")
        ind = np.zeros(m)
        ind[list(plan.sensors)] = 1.0
        self._indicator = ind
        if plan.direction is not None:
            d = as_vector(np.asarray(plan.direction), m, "direction")
        else:
            d = ind.copy()
        white = self._half_inv @ d
        norm = np.linalg.norm(white)
        # Unit direction in whitened residual coordinates.
        self._white_dir = white / norm if norm > 1e-12 else white

    def delta(self, k: int, true_innovation: np.ndarray) -> np.ndarray:
        """Injection for step k; zero outside the attack window."""
        r = np.asarray(true_innovation, dtype=float)
        if not self.plan.active(k):
            return np.zeros_like(r)
        if self.plan.strategy == "growing_bias":
            target = r + self.plan.rate * (k - self.plan.start) * self._indicator
        else:
            target = self._half @ (self.plan.scale * self._white_dir)
        white = self._half_inv @ target
        rho = float(np.linalg.norm(white))
        root_tau = math.sqrt(self.threshold)
        if self.rng.random() < self.plan.alarm_mimic_rate:
            if rho < 1e-9:
                white = self._white_dir if np.any(self._white_dir) else np.ones_like(r)
                white = white / np.linalg.norm(white)
                rho = 1.0
            target = self._half @ (white * (MIMIC_OVERSHOOT * root_tau / rho))
        else:
            limit = root_tau * (1.0 - STEALTH_MARGIN)
            if rho > limit:
                target = target * (limit / rho)
        return target - r


@dataclass(eq=False)
class Trace:
    """One closed-loop run.  ``x`` has one extra row (the final state)."""

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    ybar: np.ndarray
    delta: np.ndarray
    xhat: np.ndarray
    yhat: np.ndarray
    score: np.ndarray
    alarm: np.ndarray
    seed: int | None = None

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    def first_alarm(self, start: int = 0) -> int | None:
        hits = np.flatnonzero(self.alarm[start:])
        return int(hits[0]) + start if hits.size else None


def run_closed_loop(
    model: PlantModel,
    controller,
    calibration: KalmanCalibration,
    detector: ResidualDetector,
    horizon: int,
    *,
    attack: AttackPlan | None = None,
    seed: int | None = None,
    x0: np.ndarray | None = None,
) -> Trace:
    """Simulate ``horizon`` steps of the attacked closed loop.

    The true plant state is ground truth: the attack corrupts only the
    measurement channel, and the controller acts on the corrupted
    values.  Estimates are produced by the one-step-delayed filter, the
    same arrays the online monitor would see.
    """
    if horizon < 0:
        raise DomainError("horizon must be nonnegative")
    n, m, l = model.n_states, model.n_sensors, model.n_inputs
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    rng_plant, rng_attack = (np.random.default_rng(s) for s in ss.spawn(2))
    plan = attack if attack is not None else AttackPlan()
    synth = StealthySynthesizer(plan, detector.innovation_cov, detector.threshold, rng_attack)

    fw = noise_factor(model.process_cov)
    fv = noise_factor(model.measurement_cov)
    est = DelayedKalmanEstimator(model.a, model.b, model.c, calibration.gain)
    controller.reset()

    x = np.zeros((horizon + 1, n))
    if x0 is not None:
        x[0] = as_vector(x0, n, "x0")
    u = np.zeros((horizon, l))
    y = np.zeros((horizon, m))
    ybar = np.zeros((horizon, m))
    delta = np.zeros((horizon, m))
    xhat = np.zeros((horizon, n))
    yhat = np.zeros((horizon, m))
    score = np.zeros(horizon)
    alarm = np.zeros(horizon, dtype=bool)

    for k in range(horizon):
        if k > 0:
            est.advance(ybar[k - 1], u[k - 1])
        xhat[k] = est.xhat
        yhat[k] = est.predicted_output
        y[k] = model.c @ x[k] + fv @ rng_plant.standard_normal(m)
        delta[k] = synth.delta(k, y[k] - yhat[k])
        ybar[k] = y[k] + delta[k]
        score[k] = detector.score(ybar[k] - yhat[k])
        alarm[k] = score[k] > detector.threshold
        u[k] = controller.act(ybar[k])
        x[k + 1] = model.a @ x[k] + model.b @ u[k] + fw @ rng_plant.standard_normal(n)

    return Trace(
        x=x, u=u, y=y, ybar=ybar, delta=delta, xhat=xhat, yhat=yhat,
        score=score, alarm=alarm, seed=seed,
    )


def replay_estimation(
    model: PlantModel,
    calibration: KalmanCalibration,
    detector: ResidualDetector,
    ybar: np.ndarray,
    u: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Recompute (xhat, yhat, score, alarm) from recorded (ybar, u).

    Bit-identical to the arrays produced by :func:`run_closed_loop` on
    the same data; used when monitoring a stored trace rather than
    co-simulating.
    """
    ybar = np.atleast_2d(np.asarray(ybar, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    steps = ybar.shape[0]
    if u.shape[0] != steps:
        raise DimensionError(f"ybar has {steps} rows but u has {u.shape[0]}")
    est = DelayedKalmanEstimator(model.a, model.b, model.c, calibration.gain)
    xhat = np.zeros((steps, model.n_states))
    yhat = np.zeros((steps, model.n_sensors))
    score = np.zeros(steps)
    alarm = np.zeros(steps, dtype=bool)
    for k in range(steps):
        if k > 0:
            est.advance(ybar[k - 1], u[k - 1])
        xhat[k] = est.xhat
        yhat[k] = est.predicted_output
        score[k] = detector.score(ybar[k] - yhat[k])
        alarm[k] = score[k] > detector.threshold
    return xhat, yhat, score, alarm
