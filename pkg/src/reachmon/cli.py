"""Command-line entry point.

Subcommands mirror the workflow: ``calibrate`` solves the offline
ellipsoid programme and writes a certificate; ``simulate`` produces a
closed-loop trace under a scenario's attack plan; ``monitor`` replays or
co-simulates a scenario and emits per-step verdicts and metrics;
``evaluate`` runs Monte Carlo sweeps into rate/ROC tables; ``bench``
times the safety check.

Exit codes: 0 success, 1 validation problem (bad flags, schema or
certificate errors), 2 unexpected runtime failure.  Every subcommand
accepts ``--seed``; when a command needs randomness and no seed is
given, one is generated and printed so the run can be reproduced.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ReachmonError, SchemaError
from .estimation import ResidualDetector, calibrate_kalman, chi_square_threshold
from .harness import (
    ScenarioRuntime,
    build_controller,
    load_scenario,
    rate_rows,
    roc_rows,
    run_attacked_sensor_sweep,
    run_benchmark,
    run_scenario_once,
    run_validation_sweep,
    SENSOR_COLUMNS,
)
from .io import (
    BENCH_COLUMNS,
    RATES_COLUMNS,
    ROC_COLUMNS,
    canonical_json,
    load_certificate,
    load_model,
    load_trace_csv,
    save_certificate,
    validate_certificate,
    write_metrics_csv,
    write_table_csv,
    write_trace_csv,
    write_verdicts_jsonl,
)
from .monitor import monitor_trace, verdicts_from_series
from .plant import replay_estimation
from .reachability import compute_certificate
from .stats import fit_line

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise SchemaError(f"expected a comma-separated integer list, got {text!r}") from exc
    if not values:
        raise SchemaError("list option must contain at least one value")
    return values


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**32))
        print(f"seed: {seed}")
    return seed


def _add_seed(parser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (generated and printed when omitted)")


def build_parser() -> _Parser:
    parser = _Parser(prog="reachmon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="solve the offline ellipsoid programme")
    cal.add_argument("model", help="plant model JSON")
    cal.add_argument("--beta", type=float, required=True, help="detector false-alarm rate")
    cal.add_argument("--p", type=float, default=None,
                     help="noise-bound confidence level (default: 1 - beta)")
    cal.add_argument("--delta-h", type=float, default=0.01, help="decay-rate grid step")
    cal.add_argument("--out", required=True, help="certificate JSON to write")
    _add_seed(cal)
    cal.set_defaults(func=_cmd_calibrate)

    sim = sub.add_parser("simulate", help="run one closed-loop trace")
    sim.add_argument("scenario", help="scenario JSON")
    sim.add_argument("--out", required=True, help="trace CSV to write")
    _add_seed(sim)
    sim.set_defaults(func=_cmd_simulate)

    mon = sub.add_parser("monitor", help="run the safety monitor over a scenario")
    mon.add_argument("scenario", help="scenario JSON")
    mon.add_argument("certificate", help="certificate JSON from calibrate")
    mon.add_argument("--trace", default=None,
                     help="recorded trace CSV (co-simulates when omitted)")
    mon.add_argument("--out-metrics", required=True, help="metrics CSV to write")
    mon.add_argument("--out-verdicts", required=True, help="verdicts JSONL to write")
    _add_seed(mon)
    mon.set_defaults(func=_cmd_monitor)

    ev = sub.add_parser("evaluate", help="Monte Carlo rate sweeps")
    ev.add_argument("scenario", help="scenario template JSON")
    ev.add_argument("--k-list", type=_int_list, required=True,
                    help="comma-separated prediction horizons")
    ev.add_argument("--trials", type=int, required=True, help="trials per horizon")
    ev.add_argument("--out-rates", default="rates.csv")
    ev.add_argument("--out-roc", default="roc.csv")
    ev.add_argument("--sensors-list", type=_int_list, default=None,
                    help="also sweep attacked-sensor counts at the scenario horizon")
    ev.add_argument("--out-sensors", default="sensors.csv")
    ev.add_argument("--cert", default=None,
                    help="existing certificate (calibrated in-process when omitted)")
    ev.add_argument("--delta-h", type=float, default=0.05,
                    help="grid step for in-process calibration")
    ev.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    _add_seed(ev)
    ev.set_defaults(func=_cmd_evaluate)

    ben = sub.add_parser("bench", help="latency benchmark of the safety check")
    ben.add_argument("model", help="plant model JSON")
    ben.add_argument("--cert", default=None,
                     help="certificate for the model (coarse in-process calibration when omitted)")
    ben.add_argument("--k-list", type=_int_list, required=True)
    ben.add_argument("--constraint-list", type=_int_list, required=True)
    ben.add_argument("--checks", type=int, default=1000, help="timed checks per point")
    ben.add_argument("--fixed-k", type=int, default=500,
                     help="horizon used for the constraint sweep")
    ben.add_argument("--fixed-constraints", type=int, default=5,
                     help="constraint count used for the horizon sweep")
    ben.add_argument("--out", default="bench.csv")
    ben.add_argument("--fit-out", default="bench_fit.json",
                     help="linear-fit summary JSON ('' to skip)")
    _add_seed(ben)
    ben.set_defaults(func=_cmd_bench)

    return parser


def _load_validated_certificate(cert_path, model, model_path):
    cert, hashes = load_certificate(cert_path)
    validate_certificate(cert, hashes, model, model_path)
    return cert


def _cmd_calibrate(args) -> int:
    model = load_model(args.model)
    calibration = calibrate_kalman(
        model.a, model.c, model.process_cov, model.measurement_cov
    )
    cert = compute_certificate(
        model, calibration, beta=args.beta, p=args.p, delta_h=args.delta_h
    )
    save_certificate(cert, args.out, args.model)
    print(
        f"certificate written to {args.out}: b*={cert.b_star:.4g}, "
        f"objective={cert.objective:.6g}, w_bar={cert.w_bar:.6g}, tau={cert.tau:.6g}"
    )
    return 0


def _scenario_seed(args, scenario) -> int:
    if args.seed is not None:
        return args.seed
    if scenario.seed is not None:
        return scenario.seed
    return _resolve_seed(None)


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    model = scenario.model
    calibration = calibrate_kalman(
        model.a, model.c, model.process_cov, model.measurement_cov
    )
    detector = ResidualDetector(
        calibration.innovation_cov, chi_square_threshold(model.n_sensors, scenario.beta)
    )
    seed = _scenario_seed(args, scenario)
    trace, plan = run_scenario_once(scenario, calibration, detector, seed)
    write_trace_csv(trace, args.out)
    window = f"[{plan.start}, {plan.end})" if plan.strategy != "none" else "none"
    print(
        f"trace written to {args.out}: {trace.horizon} steps, attack {plan.strategy} "
        f"{window}, alarms {int(trace.alarm.sum())}"
    )
    return 0


def _cmd_monitor(args) -> int:
    scenario = load_scenario(args.scenario)
    model = scenario.model
    cert = _load_validated_certificate(args.certificate, model, scenario.model_path)
    if abs(cert.beta - scenario.beta) > 1e-12:
        raise SchemaError(
            f"scenario beta {scenario.beta} does not match certificate beta {cert.beta}"
        )
    calibration = calibrate_kalman(
        model.a, model.c, model.process_cov, model.measurement_cov
    )
    detector = ResidualDetector(calibration.innovation_cov, cert.tau)

    if args.trace is not None:
        data = load_trace_csv(args.trace)
        ybar, u = data["ybar"], data["u"]
        xhat, _, _, alarms = replay_estimation(model, calibration, detector, ybar, u)
        source = f"trace {args.trace}"
    else:
        seed = _scenario_seed(args, scenario)
        trace, _ = run_scenario_once(scenario, calibration, detector, seed)
        xhat, ybar = trace.xhat, trace.ybar
        alarms = trace.alarm
        source = f"co-simulation (seed {seed})"

    runtime = ScenarioRuntime(scenario, cert)
    cfg = runtime.monitor_config(scenario.k_horizon)
    series = monitor_trace(cfg, xhat, ybar, keep_profiles=True)
    write_metrics_csv(series, args.out_metrics)
    write_verdicts_jsonl(verdicts_from_series(cfg, series), args.out_verdicts)
    unsafe_steps = int((~series.safe).sum())
    print(
        f"monitored {len(series)} steps from {source}: {unsafe_steps} unsafe verdicts, "
        f"{int(np.sum(alarms))} detector alarms; wrote {args.out_metrics}, {args.out_verdicts}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.trials < 1:
        raise SchemaError("--trials must be positive")
    seed = _resolve_seed(args.seed)
    if args.cert is not None:
        cert = _load_validated_certificate(args.cert, scenario.model, scenario.model_path)
        runtime = ScenarioRuntime(scenario, cert)
    else:
        runtime = ScenarioRuntime.calibrated(scenario, delta_h=args.delta_h)
    rates, _ = run_validation_sweep(
        runtime, args.k_list, args.trials, seed=seed, jobs=args.jobs
    )
    write_table_csv(args.out_rates, RATES_COLUMNS, rates)
    write_table_csv(args.out_roc, ROC_COLUMNS, roc_rows(rates))
    print(f"wrote {args.out_rates} and {args.out_roc} ({len(rates)} horizons, "
          f"{args.trials} trials each, seed {seed})")
    if args.sensors_list:
        sensor_rows = run_attacked_sensor_sweep(
            runtime, args.sensors_list, args.trials, seed=seed + 1, jobs=args.jobs
        )
        write_table_csv(args.out_sensors, SENSOR_COLUMNS, sensor_rows)
        print(f"wrote {args.out_sensors} ({len(sensor_rows)} sensor counts)")
    return 0


def _cmd_bench(args) -> int:
    model = load_model(args.model)
    if args.cert is not None:
        cert = _load_validated_certificate(args.cert, model, args.model)
    else:
        print("no certificate supplied; running a coarse calibration (delta_h=0.9)")
        calibration = calibrate_kalman(
            model.a, model.c, model.process_cov, model.measurement_cov
        )
        cert = compute_certificate(model, calibration, beta=0.05, p=0.99, delta_h=0.9)
    seed = _resolve_seed(args.seed)
    controller_spec = {
        "type": "static",
        "gain": np.zeros((model.n_inputs, model.n_sensors)).tolist(),
    }
    records = run_benchmark(
        model, cert, controller_spec,
        k_list=args.k_list, constraint_list=args.constraint_list,
        checks=args.checks, fixed_constraints=args.fixed_constraints,
        fixed_k=args.fixed_k, seed=seed,
    )
    write_table_csv(args.out, BENCH_COLUMNS, [r.as_row() for r in records])
    print(f"wrote {args.out} ({len(records)} configurations, seed {seed})")
    if args.fit_out:
        k_part = records[: len(args.k_list)]
        c_part = records[len(args.k_list):]
        k_fit = fit_line([r.k_horizon for r in k_part], [r.mean_seconds for r in k_part])
        c_fit = fit_line([r.constraints for r in c_part], [r.mean_seconds for r in c_part])
        payload = {
            "k_sweep": {
                "fixed_constraints": args.fixed_constraints,
                "slope": k_fit.slope, "intercept": k_fit.intercept,
                "r_squared": k_fit.r_squared,
            },
            "constraint_sweep": {
                "fixed_k": args.fixed_k,
                "slope": c_fit.slope, "intercept": c_fit.intercept,
                "r_squared": c_fit.r_squared,
            },
        }
        Path(args.fit_out).write_text(canonical_json(payload) + "\n", encoding="utf-8")
        print(f"wrote {args.fit_out} (R² {k_fit.r_squared:.4f} vs K, "
              f"{c_fit.r_squared:.4f} vs constraints)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except ReachmonError as exc:
        # argparse only converts ValueError/TypeError from type= callables,
        # so list-option schema errors arrive here.
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ReachmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:  # pragma: no cover
        return 2
    except Exception as exc:  # pragma: no cover — defensive catch-all
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
