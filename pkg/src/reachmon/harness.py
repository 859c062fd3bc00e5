"""Scenario execution, Monte Carlo validation, and benchmarks.

A scenario file binds a plant model to a controller, an attack plan, an
unsafe set, and monitor settings.  The harness turns one scenario into:

* single closed-loop trials (trace + per-step monitor metrics),
* outcome classification per trial (TP/TN/FP/FN/other) for a given
  prediction horizon,
* rate tables over sweeps of the horizon or of the attacked-sensor
  count, with Wilson confidence intervals,
* latency benchmarks of the safety check itself.

Sweeps simulate each trial once and classify it at every horizon in the
sweep — the monitor is passive, so the trace does not depend on K, and
reusing it both mirrors how rate-vs-horizon curves are produced from a
fixed simulation batch and makes the tables cheap and exactly
reproducible.  Trials are independent and may run in a process pool;
aggregation sorts by trial index so the output is byte-stable for a
fixed seed regardless of worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClassificationError, DomainError, SchemaError
from .estimation import ResidualDetector, calibrate_kalman, chi_square_threshold
from .geometry import HalfSpace, UnsafeSet
from .io import RATES_COLUMNS, load_json, load_model, load_unsafe_set
from .monitor import MetricsSeries, MonitorConfig, monitor_trace
from .plant import (
    AttackPlan,
    PIOutputController,
    PlantModel,
    StaticOutputController,
    Trace,
    run_closed_loop,
)
from .reachability import ReachCertificate, compute_certificate

__all__ = [
    "Scenario",
    "load_scenario",
    "build_controller",
    "ScenarioRuntime",
    "run_scenario_once",
    "TrialData",
    "TrialSummary",
    "TrialOutcome",
    "classify_trial",
    "damage_step_of",
    "simulate_trial",
    "summarize_trial",
    "run_validation_sweep",
    "run_attacked_sensor_sweep",
    "rate_rows",
    "roc_rows",
    "BenchRecord",
    "run_benchmark",
    "SENSOR_COLUMNS",
]

SENSOR_COLUMNS = ("sensors_attacked",) + RATES_COLUMNS[1:]


@dataclass(frozen=True, eq=False)
class Scenario:
    """One fully resolved scenario file."""

    name: str
    model_path: str
    model: PlantModel
    controller_spec: dict
    attack_spec: dict
    unsafe: UnsafeSet
    k_horizon: int
    beta: float
    p: float
    horizon: int
    seed: int | None


def load_scenario(path) -> Scenario:
    """Read and cross-validate a scenario JSON file.

    ``model_ref`` and a string-valued ``unsafe_set`` are resolved
    relative to the scenario file's directory.
    """
    path = Path(path)
    data = load_json(path)
    missing = [k for k in ("model_ref", "controller", "unsafe_set", "monitor", "run")
               if k not in data]
    if missing:
        raise SchemaError(f"{path}: missing sections {', '.join(missing)}")
    model_path = Path(data["model_ref"])
    if not model_path.is_absolute():
        model_path = path.parent / model_path
    model = load_model(model_path)

    unsafe_src = data["unsafe_set"]
    if isinstance(unsafe_src, str):
        ref = Path(unsafe_src)
        unsafe_src = ref if ref.is_absolute() else path.parent / ref
    unsafe = load_unsafe_set(unsafe_src)
    if len(unsafe) and unsafe.dim != model.n_states:
        raise SchemaError(
            f"{path}: unsafe set dimension {unsafe.dim} != model states {model.n_states}"
        )

    mon = data["monitor"]
    if not isinstance(mon, dict):
        raise SchemaError(f"{path}: monitor section must be an object")
    for key in ("K", "beta", "p"):
        if key not in mon:
            raise SchemaError(f"{path}: monitor section missing {key}")
    run = data["run"]
    if not isinstance(run, dict) or "horizon" not in run:
        raise SchemaError(f"{path}: run section needs a horizon")

    attack = data.get("attack", {"strategy": "none"})
    if not isinstance(attack, dict):
        raise SchemaError(f"{path}: attack section must be an object")
    controller = data["controller"]
    if not isinstance(controller, dict) or "type" not in controller:
        raise SchemaError(f"{path}: controller section needs a type")

    seed = run.get("seed")
    return Scenario(
        name=path.stem,
        model_path=str(model_path),
        model=model,
        controller_spec=controller,
        attack_spec=attack,
        unsafe=unsafe,
        k_horizon=int(mon["K"]),
        beta=float(mon["beta"]),
        p=float(mon["p"]),
        horizon=int(run["horizon"]),
        seed=None if seed is None else int(seed),
    )


def build_controller(spec: dict, dt: float):
    kind = spec.get("type")
    if kind == "static":
        if "gain" not in spec:
            raise SchemaError("static controller needs a gain matrix")
        return StaticOutputController(
            gain=np.array(spec["gain"], dtype=float),
            reference=None if spec.get("reference") is None
            else np.array(spec["reference"], dtype=float),
        )
    if kind == "pi":
        for key in ("kp", "ki"):
            if key not in spec:
                raise SchemaError(f"pi controller needs {key}")
        return PIOutputController(
            kp=np.array(spec["kp"], dtype=float),
            ki=np.array(spec["ki"], dtype=float),
            dt=dt,
            reference=None if spec.get("reference") is None
            else np.array(spec["reference"], dtype=float),
        )
    raise SchemaError(f"unknown controller type {kind!r}")


def _draw(value, rng: np.random.Generator, log: bool = False) -> float:
    """A scenario scalar that may be a per-trial random draw.

    Accepts a plain number, a ``[lo, hi]`` uniform range, or
    ``{"magnitude": number-or-range, "signed": true, "log": true}``:
    a symmetric draw whose sign is a fair coin flip, optionally
    log-uniform over the magnitude range (both endpoints positive).
    """
    if isinstance(value, dict):
        if "magnitude" not in value:
            raise SchemaError(f"random-draw object needs a 'magnitude' key, got {value}")
        mag = _draw(value["magnitude"], rng, log=bool(value.get("log")))
        if value.get("signed"):
            mag = float(mag * rng.choice((-1.0, 1.0)))
        return mag
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise SchemaError(f"range parameter must be [lo, hi], got {value}")
        lo, hi = float(value[0]), float(value[1])
        if log:
            if lo <= 0 or hi <= 0:
                raise SchemaError(f"log-uniform range must be positive, got {value}")
            return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        return float(rng.uniform(lo, hi))
    return float(value)


def build_attack_plan(spec: dict, n_sensors: int, rng: np.random.Generator) -> AttackPlan:
    """Resolve an attack section into a concrete per-trial plan.

    ``sensors`` may be an explicit index list or ``{"random": count}``
    (a seeded uniform draw without replacement; ``count`` may itself be
    a ``[lo, hi]`` integer range); ``rate`` and ``scale`` may be
    ``[lo, hi]`` ranges sampled per trial.
    """
    strategy = spec.get("strategy", "none")
    if strategy == "none":
        return AttackPlan()
    sensors = spec.get("sensors")
    if isinstance(sensors, dict):
        if "random" not in sensors:
            raise SchemaError("sensors object must be {'random': count}")
        count_spec = sensors["random"]
        if isinstance(count_spec, (list, tuple)):
            if len(count_spec) != 2:
                raise SchemaError(f"sensor count range must be [lo, hi], got {count_spec}")
            count = int(rng.integers(int(count_spec[0]), int(count_spec[1]) + 1))
        else:
            count = int(count_spec)
        if not 1 <= count <= n_sensors:
            raise SchemaError(f"cannot attack {count} of {n_sensors} sensors")
        chosen = tuple(int(i) for i in sorted(rng.choice(n_sensors, size=count, replace=False)))
    elif sensors is None:
        raise SchemaError("attack section needs sensors")
    else:
        chosen = tuple(int(i) for i in sensors)
    return AttackPlan(
        strategy=strategy,
        start=int(spec.get("start", 0)),
        end=int(spec.get("end", 0)),
        sensors=chosen,
        rate=_draw(spec.get("rate", 0.0), rng),
        scale=_draw(spec.get("scale", 0.0), rng),
        direction=None if spec.get("direction") is None else tuple(spec["direction"]),
        alarm_mimic_rate=float(spec.get("alarm_mimic_rate", 0.0)),
    )


class ScenarioRuntime:
    """Per-scenario preparation shared across trials.

    Calibrates the estimator, fixes the detector threshold, and holds
    the reach-set certificate; monitor configurations are built lazily
    per horizon and cached (the rollout precomputation is the expensive
    part worth sharing).
    """

    def __init__(self, scenario: Scenario, cert: ReachCertificate):
        self.scenario = scenario
        self.model = scenario.model
        self.calibration = calibrate_kalman(
            self.model.a, self.model.c, self.model.process_cov, self.model.measurement_cov
        )
        tau = chi_square_threshold(self.model.n_sensors, scenario.beta)
        self.detector = ResidualDetector(self.calibration.innovation_cov, tau)
        self.cert = cert
        self._configs: dict[tuple[int, bool], MonitorConfig] = {}

    @classmethod
    def calibrated(cls, scenario: Scenario, *, delta_h: float = 0.05) -> "ScenarioRuntime":
        """Build the runtime and compute the certificate in one go."""
        calibration = calibrate_kalman(
            scenario.model.a, scenario.model.c,
            scenario.model.process_cov, scenario.model.measurement_cov,
        )
        cert = compute_certificate(
            scenario.model, calibration,
            beta=scenario.beta, p=scenario.p, delta_h=delta_h,
        )
        return cls(scenario, cert)

    def monitor_config(self, k_horizon: int, early_exit: bool = True) -> MonitorConfig:
        key = (k_horizon, early_exit)
        if key not in self._configs:
            self._configs[key] = MonitorConfig(
                model=self.model,
                controller=build_controller(self.scenario.controller_spec, self.model.dt),
                cert=self.cert,
                unsafe=self.scenario.unsafe,
                k_horizon=k_horizon,
                early_exit=early_exit,
            )
        return self._configs[key]

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_configs"] = {}  # predictor stacks are cheap to rebuild per worker
        return state


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    """Classification of one trial at one prediction horizon."""

    classification: str  # TP | TN | FP | FN | other
    subtype: str | None
    warning_step: int | None
    detection_step: int | None
    damage_step: int | None
    seed: int | None


@dataclass(eq=False)
class TrialData:
    """Full record of one trial: trace, metrics, and event steps."""

    trace: Trace
    series: MetricsSeries
    attack: AttackPlan
    damage_step: int | None
    detection_step: int | None
    seed: int | None

    def outcome(self, k_horizon: int) -> TrialOutcome:
        return classify_trial(
            warning_step=self.series.warning_step(k_horizon),
            detection_step=self.detection_step,
            damage_step=self.damage_step,
            k_horizon=k_horizon,
            seed=self.seed,
        )


@dataclass(frozen=True, eq=False)
class TrialSummary:
    """Slim per-trial result for sweep aggregation."""

    index: int
    damage_step: int | None
    detection_step: int | None
    k_f_series: np.ndarray  # first violating offset per step, -1 if none

    def warning_step(self, k_horizon: int) -> int | None:
        mask = (self.k_f_series >= 0) & (self.k_f_series <= k_horizon)
        hits = np.flatnonzero(mask)
        return int(hits[0]) if hits.size else None


def damage_step_of(x: np.ndarray, unsafe: UnsafeSet) -> int | None:
    """First step whose true state lies in the unsafe union."""
    if x is None or np.size(x) == 0:
        raise ClassificationError("trial has no ground-truth state trajectory")
    if not len(unsafe):
        return None
    margins = np.asarray(x, dtype=float) @ unsafe.normals.T - unsafe.offsets
    hits = np.flatnonzero((margins >= 0.0).any(axis=1))
    return int(hits[0]) if hits.size else None


def classify_trial(
    *,
    warning_step: int | None,
    detection_step: int | None,
    damage_step: int | None,
    k_horizon: int,
    seed: int | None = None,
) -> TrialOutcome:
    """Apply the validation decision table.

    With damage at step g, a warning counts only inside the window
    [g - K, g).  In-window warning: true positive when damage precedes
    any detection, false positive when detection wins the race, a tie
    goes to ``other``.  No in-window warning: the detector's catch makes
    it a true negative, silence from both makes it a false negative.
    Trials without damage fall outside the four definitions and are
    labelled ``other`` with a subtype breakdown (detected_no_damage /
    warning_no_damage / quiet).  The window test uses the trial's first
    warning step; a warning that fires earlier than ``g - K`` leaves the
    window empty-handed even if later steps kept warning, matching the
    first-warning semantics of the TrialOutcome record.
    """
    w, d, g = warning_step, detection_step, damage_step
    if g is not None:
        in_window = w is not None and (g - k_horizon) <= w < g
        if in_window:
            if d is None or d > g:
                label, sub = "TP", None
            elif d < g:
                label, sub = "FP", None
            else:
                label, sub = "other", "detection_damage_tie"
        elif d is not None:
            label, sub = "TN", None
        else:
            label, sub = "FN", None
    elif d is not None:
        label, sub = "other", "detected_no_damage"
    elif w is not None:
        label, sub = "other", "warning_no_damage"
    else:
        label, sub = "other", "quiet"
    return TrialOutcome(
        classification=label, subtype=sub, warning_step=w,
        detection_step=d, damage_step=g, seed=seed,
    )


def run_scenario_once(scenario: Scenario, calibration, detector, seed) -> tuple[Trace, AttackPlan]:
    """One simulation of a scenario under a single trial seed.

    The seed splits into an attack-setup stream (random sensor choice,
    per-trial parameter ranges) and the simulation stream, so the same
    seed always resolves to the same plan *and* the same noise.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    setup_ss, sim_ss = ss.spawn(2)
    setup_rng = np.random.default_rng(setup_ss)
    plan = build_attack_plan(scenario.attack_spec, scenario.model.n_sensors, setup_rng)
    controller = build_controller(scenario.controller_spec, scenario.model.dt)
    trace = run_closed_loop(
        scenario.model, controller, calibration, detector,
        scenario.horizon, attack=plan, seed=sim_ss,
    )
    return trace, plan


def _execute(runtime: ScenarioRuntime, seed, k_horizon: int, keep_trace: bool):
    """Common trial core: resolve the plan, simulate, monitor, locate events."""
    scenario = runtime.scenario
    trace, plan = run_scenario_once(scenario, runtime.calibration, runtime.detector, seed)
    cfg = runtime.monitor_config(k_horizon)
    series = monitor_trace(cfg, trace.xhat, trace.ybar)
    damage = damage_step_of(trace.x[:-1], scenario.unsafe)
    if plan.strategy != "none":
        detection = trace.first_alarm(plan.start)
    else:
        detection = trace.first_alarm()
    return trace if keep_trace else None, series, plan, damage, detection


def simulate_trial(runtime: ScenarioRuntime, seed=None, *, k_horizon: int | None = None) -> TrialData:
    """Run one full trial and keep everything (trace included)."""
    k = runtime.scenario.k_horizon if k_horizon is None else k_horizon
    trace, series, plan, damage, detection = _execute(runtime, seed, k, keep_trace=True)
    plain_seed = seed if isinstance(seed, (int, type(None))) else None
    return TrialData(
        trace=trace, series=series, attack=plan,
        damage_step=damage, detection_step=detection, seed=plain_seed,
    )


def summarize_trial(runtime: ScenarioRuntime, seed, index: int, k_max: int) -> TrialSummary:
    """Run one trial, discard the bulk, keep what classification needs."""
    _, series, _, damage, detection = _execute(runtime, seed, k_max, keep_trace=False)
    return TrialSummary(
        index=index, damage_step=damage, detection_step=detection,
        k_f_series=series.k_f.astype(np.int32),
    )


# --- process-pool plumbing --------------------------------------------

_WORKER_RUNTIME: ScenarioRuntime | None = None


def _pool_init(runtime: ScenarioRuntime) -> None:
    global _WORKER_RUNTIME
    _WORKER_RUNTIME = runtime


def _pool_summarize(args) -> TrialSummary:
    index, seed, k_max = args
    return summarize_trial(_WORKER_RUNTIME, seed, index, k_max)


def _run_trials(runtime: ScenarioRuntime, seeds, k_max: int, jobs: int) -> list[TrialSummary]:
    tasks = [(i, ss, k_max) for i, ss in enumerate(seeds)]
    if jobs <= 1:
        out = [summarize_trial(runtime, ss, i, k_max) for i, ss, _ in tasks]
    else:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init, initargs=(runtime,)
        ) as pool:
            out = list(pool.map(_pool_summarize, tasks, chunksize=4))
    return sorted(out, key=lambda s: s.index)


def _count_labels(outcomes) -> dict[str, int]:
    counts = {"TP": 0, "FP": 0, "TN": 0, "FN": 0, "other": 0}
    for o in outcomes:
        counts[o.classification] += 1
    return counts


def rate_rows(per_k_outcomes: dict[int, list[TrialOutcome]]) -> list[dict]:
    """Build rates-table rows (one per horizon) from classified trials.

    Rates are per-trial label fractions; each carries a Wilson 95%
    interval.  Horizons with zero trials are omitted.
    """
    from .stats import wilson_interval

    rows = []
    for k in sorted(per_k_outcomes):
        outcomes = per_k_outcomes[k]
        trials = len(outcomes)
        if trials == 0:
            continue
        counts = _count_labels(outcomes)
        row = {
            "k_horizon": k, "trials": trials,
            "tp": counts["TP"], "fp": counts["FP"], "tn": counts["TN"],
            "fn": counts["FN"], "other": counts["other"],
        }
        for label, col in (("TP", "tpr"), ("FP", "fpr"), ("TN", "tnr"), ("FN", "fnr")):
            lo, hi = wilson_interval(counts[label], trials)
            row[col] = counts[label] / trials
            row[f"{col}_lo"] = lo
            row[f"{col}_hi"] = hi
        rows.append(row)
    return rows


def roc_rows(rates: list[dict]) -> list[dict]:
    return [
        {"fpr": r["fpr"], "tpr": r["tpr"], "k_horizon": r["k_horizon"]} for r in rates
    ]


def run_validation_sweep(
    runtime: ScenarioRuntime,
    k_list: list[int],
    trials: int,
    *,
    seed: int | None = None,
    jobs: int = 1,
) -> tuple[list[dict], dict[int, list[TrialOutcome]]]:
    """Monte Carlo rates over a sweep of prediction horizons.

    Each of ``trials`` seeded simulations is classified at every
    horizon in ``k_list`` (the trace is horizon-independent).  Returns
    the rates-table rows and the per-horizon outcome lists.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    if not k_list:
        raise DomainError("need at least one horizon")
    k_list = sorted(int(k) for k in k_list)
    k_max = k_list[-1]
    seeds = np.random.SeedSequence(seed).spawn(trials)
    summaries = _run_trials(runtime, seeds, k_max, jobs)
    per_k: dict[int, list[TrialOutcome]] = {}
    for k in k_list:
        per_k[k] = [
            classify_trial(
                warning_step=s.warning_step(k),
                detection_step=s.detection_step,
                damage_step=s.damage_step,
                k_horizon=k,
                seed=s.index,
            )
            for s in summaries
        ]
    return rate_rows(per_k), per_k


def run_attacked_sensor_sweep(
    runtime: ScenarioRuntime,
    sensor_counts: list[int],
    trials: int,
    *,
    seed: int | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Rates at the scenario horizon while varying how many sensors are hit.

    Overrides the scenario's attack sensors with ``{"random": count}``
    per sweep point; each point gets its own independent seed block.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    scenario = runtime.scenario
    k = scenario.k_horizon
    top = np.random.SeedSequence(seed)
    rows = []
    for count, block in zip(sensor_counts, top.spawn(len(sensor_counts))):
        spec = dict(scenario.attack_spec)
        spec["sensors"] = {"random": int(count)}
        sub = Scenario(
            name=scenario.name, model_path=scenario.model_path, model=scenario.model,
            controller_spec=scenario.controller_spec, attack_spec=spec,
            unsafe=scenario.unsafe, k_horizon=k, beta=scenario.beta, p=scenario.p,
            horizon=scenario.horizon, seed=scenario.seed,
        )
        sub_runtime = ScenarioRuntime(sub, runtime.cert)
        summaries = _run_trials(sub_runtime, block.spawn(trials), k, jobs)
        outcomes = [
            classify_trial(
                warning_step=s.warning_step(k), detection_step=s.detection_step,
                damage_step=s.damage_step, k_horizon=k, seed=s.index,
            )
            for s in summaries
        ]
        row = rate_rows({k: outcomes})[0]
        row = {("sensors_attacked" if key == "k_horizon" else key): val
               for key, val in row.items()}
        row["sensors_attacked"] = int(count)
        rows.append(row)
    return rows


# --- benchmarks --------------------------------------------------------


@dataclass(frozen=True)
class BenchRecord:
    """Latency statistics for one monitor configuration."""

    k_horizon: int
    constraints: int
    n: int
    checks: int
    mean_seconds: float
    p50_seconds: float
    p95_seconds: float
    max_seconds: float

    def as_row(self) -> dict:
        return {
            "k_horizon": self.k_horizon, "constraints": self.constraints,
            "n": self.n, "checks": self.checks,
            "mean_seconds": self.mean_seconds, "p50_seconds": self.p50_seconds,
            "p95_seconds": self.p95_seconds, "max_seconds": self.max_seconds,
        }


def _random_unsafe(n: int, count: int, rng: np.random.Generator, far: float) -> UnsafeSet:
    normals = rng.standard_normal((count, n))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return UnsafeSet(tuple(
        HalfSpace(normal=normals[i], offset=far) for i in range(count)
    ))


def run_benchmark(
    model: PlantModel,
    cert: ReachCertificate,
    controller_spec: dict,
    *,
    k_list: list[int],
    constraint_list: list[int],
    checks: int = 1000,
    fixed_constraints: int = 5,
    fixed_k: int = 500,
    seed: int | None = None,
    warmup: int = 20,
) -> list[BenchRecord]:
    """Worst-case latency of one monitoring step across two sweeps.

    Early exit is disabled so every predicted step and every constraint
    is visited.  Constraints are random unit half-spaces placed far from
    the sampled estimates (the full horizon must be scanned); per
    configuration, ``checks`` timed calls follow ``warmup`` untimed
    ones.  Runs single-worker by design — latency numbers under pool
    contention are noise.
    """
    if checks < 1:
        raise DomainError("need at least one timed check")
    rng = np.random.default_rng(seed)
    n = model.n_states
    records = []
    combos = [(int(k), int(fixed_constraints)) for k in k_list]
    combos += [(int(fixed_k), int(c)) for c in constraint_list]
    for k, count in combos:
        unsafe = _random_unsafe(n, count, rng, far=1e6)
        cfg = MonitorConfig(
            model=model,
            controller=build_controller(controller_spec, model.dt),
            cert=cert,
            unsafe=unsafe,
            k_horizon=k,
            early_exit=False,
        )
        from .monitor import check_safety

        states = rng.standard_normal((warmup + checks, n))
        for i in range(warmup):
            check_safety(cfg, states[i])
        lat = np.empty(checks)
        for i in range(checks):
            t0 = time.perf_counter()
            check_safety(cfg, states[warmup + i])
            lat[i] = time.perf_counter() - t0
        records.append(
            BenchRecord(
                k_horizon=k, constraints=count, n=n, checks=checks,
                mean_seconds=float(lat.mean()),
                p50_seconds=float(np.percentile(lat, 50)),
                p95_seconds=float(np.percentile(lat, 95)),
                max_seconds=float(lat.max()),
            )
        )
    return records
