"""File formats: models, certificates, unsafe sets, traces, metric tables.

Every float leaving this module is rendered with 17 significant digits
(`%.17g`), enough for exact double round-trips, so repeated runs with
the same seed produce byte-identical files.  JSON is emitted through
one canonical serializer (insertion-ordered keys, no whitespace
variation) — the same string that is hashed when a file participates in
a certificate fingerprint.

On-disk schemas
---------------
model JSON        keys A, B, C, Sigma1, Sigma2, dt.
certificate JSON  keys Pi, b_star, p, w_bar, w_bar_std_error, objective,
                  beta, tau, L, Sigma, model_sha256, estimator_sha256.
unsafe-set JSON   key constraints: list of {name, normal, offset}; extra
                  keys (units, commentary) are preserved but ignored.
trace CSV         k, x_*, u_*, y_*, ybar_*, delta_* — one row per
                  simulated step (the terminal state x(T) is not
                  written; nothing downstream consumes it).
metrics CSV       k, safe, k_f, tc_seconds, impact, d_u, t_u,
                  min_distance; safe is 1/0, k_f is -1 when safe,
                  undefined reals are written as nan.
verdicts JSONL    one object per monitoring step, fixed key order:
                  k, safe, k_f, violated_constraint, center_unsafe,
                  tc_seconds, impact, min_distance, baseline_du,
                  baseline_tu, per_step_min_distance.
rates CSV         k_horizon, trials, tp, fp, tn, fn, other, then
                  {tpr,fpr,tnr,fnr} each with Wilson 95% lo/hi bounds.
                  Rates are per-trial label fractions (counts/trials).
roc CSV           fpr, tpr, k_horizon.
bench CSV         k_horizon, constraints, n, checks, mean_seconds,
                  p50_seconds, p95_seconds, max_seconds.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from pathlib import Path

import numpy as np

from .errors import CertificateError, SchemaError
from .monitor import MetricsSeries, MonitorVerdict
from .plant import PlantModel, Trace
from .reachability import ReachCertificate, verify_certificate

__all__ = [
    "format_float",
    "canonical_json",
    "sha256_file",
    "load_json",
    "load_model",
    "save_model",
    "load_unsafe_set",
    "save_certificate",
    "load_certificate",
    "validate_certificate",
    "estimator_fingerprint",
    "write_trace_csv",
    "load_trace_csv",
    "write_metrics_csv",
    "write_verdicts_jsonl",
    "write_table_csv",
    "RATES_COLUMNS",
    "ROC_COLUMNS",
    "BENCH_COLUMNS",
]

RATES_COLUMNS = (
    "k_horizon", "trials", "tp", "fp", "tn", "fn", "other",
    "tpr", "tpr_lo", "tpr_hi", "fpr", "fpr_lo", "fpr_hi",
    "tnr", "tnr_lo", "tnr_hi", "fnr", "fnr_lo", "fnr_hi",
)
ROC_COLUMNS = ("fpr", "tpr", "k_horizon")
BENCH_COLUMNS = (
    "k_horizon", "constraints", "n", "checks",
    "mean_seconds", "p50_seconds", "p95_seconds", "max_seconds",
)


def format_float(x: float) -> str:
    """Render a double with 17 significant digits (exact round-trip)."""
    return f"{float(x):.17g}"


def canonical_json(value) -> str:
    """Deterministic JSON: insertion-ordered keys, %.17g floats, no spaces.

    Non-finite floats become null (JSON has no NaN/Infinity in its
    strict grammar, and hashes must not depend on parser leniency).
    """
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return format_float(v) if math.isfinite(v) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return canonical_json(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in value) + "]"
    if isinstance(value, dict):
        parts = (f"{json.dumps(str(k))}:{canonical_json(v)}" for k, v in value.items())
        return "{" + ",".join(parts) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_json(path) -> dict:
    """Read a JSON file whose top level must be an object."""
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: file not found")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{p}: top level must be an object")
    return data


_load_json = load_json


def _require(data: dict, keys, where: str) -> None:
    missing = [k for k in keys if k not in data]
    if missing:
        raise SchemaError(f"{where}: missing keys {', '.join(missing)}")


# --- models ------------------------------------------------------------


def load_model(path) -> PlantModel:
    data = _load_json(path)
    _require(data, ("A", "B", "C", "Sigma1", "Sigma2", "dt"), str(path))
    try:
        return PlantModel(
            a=np.array(data["A"], dtype=float),
            b=np.array(data["B"], dtype=float),
            c=np.array(data["C"], dtype=float),
            process_cov=np.array(data["Sigma1"], dtype=float),
            measurement_cov=np.array(data["Sigma2"], dtype=float),
            dt=float(data["dt"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed model ({exc})") from exc


def save_model(model: PlantModel, path) -> None:
    payload = {
        "A": model.a, "B": model.b, "C": model.c,
        "Sigma1": model.process_cov, "Sigma2": model.measurement_cov,
        "dt": model.dt,
    }
    _write_text(path, canonical_json(payload) + "\n")


# --- unsafe sets -------------------------------------------------------


def load_unsafe_set(source):
    """Build an UnsafeSet from a file path, a dict, or a constraint list."""
    from .geometry import HalfSpace, UnsafeSet

    if isinstance(source, (str, Path)):
        data = _load_json(source)
        _require(data, ("constraints",), str(source))
        entries = data["constraints"]
        where = str(source)
    elif isinstance(source, dict):
        _require(source, ("constraints",), "unsafe_set")
        entries = source["constraints"]
        where = "unsafe_set"
    else:
        entries = source
        where = "unsafe_set"
    if not isinstance(entries, list):
        raise SchemaError(f"{where}: constraints must be a list")
    half_spaces = []
    for i, item in enumerate(entries):
        if not isinstance(item, dict):
            raise SchemaError(f"{where}[{i}]: each constraint must be an object")
        _require(item, ("normal", "offset"), f"{where}[{i}]")
        half_spaces.append(
            HalfSpace(
                normal=np.array(item["normal"], dtype=float),
                offset=float(item["offset"]),
                name=str(item.get("name", f"constraint_{i}")),
            )
        )
    return UnsafeSet(tuple(half_spaces))


# --- certificates ------------------------------------------------------


def estimator_fingerprint(cert: ReachCertificate) -> str:
    """Hash of the estimator/detector quantities the ellipsoid depends on."""
    payload = {
        "L": cert.gain, "Sigma": cert.innovation_cov,
        "beta": cert.beta, "tau": cert.tau,
    }
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def save_certificate(cert: ReachCertificate, path, model_path) -> None:
    payload = {
        "Pi": cert.pi,
        "b_star": cert.b_star,
        "p": cert.p,
        "w_bar": cert.w_bar,
        "w_bar_std_error": cert.w_bar_std_error,
        "objective": cert.objective,
        "beta": cert.beta,
        "tau": cert.tau,
        "L": cert.gain,
        "Sigma": cert.innovation_cov,
        "model_sha256": sha256_file(model_path),
        "estimator_sha256": estimator_fingerprint(cert),
    }
    _write_text(path, canonical_json(payload) + "\n")


def load_certificate(path) -> tuple[ReachCertificate, dict]:
    """Read a certificate file; returns (certificate, stored fingerprints).

    Integrity against a concrete model file is a separate step —
    :func:`validate_certificate` — so a certificate can be inspected
    without the model on hand.
    """
    data = _load_json(path)
    _require(
        data,
        ("Pi", "b_star", "p", "w_bar", "objective", "beta", "tau", "L",
         "Sigma", "model_sha256", "estimator_sha256"),
        str(path),
    )
    try:
        cert = ReachCertificate(
            pi=np.array(data["Pi"], dtype=float),
            b_star=float(data["b_star"]),
            p=float(data["p"]),
            w_bar=float(data["w_bar"]),
            objective=float(data["objective"]),
            beta=float(data["beta"]),
            tau=float(data["tau"]),
            gain=np.array(data["L"], dtype=float),
            innovation_cov=np.array(data["Sigma"], dtype=float),
            w_bar_std_error=float(data.get("w_bar_std_error", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed certificate ({exc})") from exc
    hashes = {
        "model_sha256": str(data["model_sha256"]),
        "estimator_sha256": str(data["estimator_sha256"]),
    }
    return cert, hashes


def validate_certificate(
    cert: ReachCertificate, hashes: dict, model: PlantModel, model_path
) -> float:
    """Fail closed unless the certificate still matches its inputs.

    Checks, in order: the model file bytes hash to the stored
    fingerprint; the stored estimator quantities hash to theirs; and the
    stored ellipsoid still satisfies the invariance LMI for this plant.
    Returns the LMI margin on success.
    """
    actual = sha256_file(model_path)
    if actual != hashes.get("model_sha256"):
        raise CertificateError(
            f"model file {model_path} does not match the certificate "
            f"(hash {actual[:12]}… vs stored {str(hashes.get('model_sha256'))[:12]}…)"
        )
    fp = estimator_fingerprint(cert)
    if fp != hashes.get("estimator_sha256"):
        raise CertificateError("certificate estimator fields have been altered")
    return verify_certificate(cert, model.a)


# --- trace CSV ---------------------------------------------------------


def _csv_row(values) -> str:
    return ",".join(values) + "\n"


def write_trace_csv(trace: Trace, path) -> None:
    t = trace.horizon
    n = trace.x.shape[1]
    l = trace.u.shape[1]
    m = trace.y.shape[1]
    header = (
        ["k"]
        + [f"x_{i}" for i in range(n)]
        + [f"u_{i}" for i in range(l)]
        + [f"y_{i}" for i in range(m)]
        + [f"ybar_{i}" for i in range(m)]
        + [f"delta_{i}" for i in range(m)]
    )
    lines = [_csv_row(header)]
    for k in range(t):
        row = [str(k)]
        for block in (trace.x[k], trace.u[k], trace.y[k], trace.ybar[k], trace.delta[k]):
            row.extend(format_float(v) for v in block)
        lines.append(_csv_row(row))
    _write_text(path, "".join(lines))


def load_trace_csv(path) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: file not found")
    with p.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        with warnings.catch_warnings():
            # An empty body is our SchemaError below, not numpy's warning.
            warnings.simplefilter("ignore", UserWarning)
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    if body.size == 0:
        raise SchemaError(f"{p}: empty trace")
    if body.shape[1] != len(header):
        raise SchemaError(f"{p}: ragged rows")
    cols = {name: i for i, name in enumerate(header)}
    if "k" not in cols:
        raise SchemaError(f"{p}: missing k column")

    def group(prefix: str) -> np.ndarray:
        idx = []
        j = 0
        while f"{prefix}_{j}" in cols:
            idx.append(cols[f"{prefix}_{j}"])
            j += 1
        if not idx:
            raise SchemaError(f"{p}: missing {prefix}_* columns")
        return body[:, idx]

    return {
        "k": body[:, cols["k"]].astype(int),
        "x": group("x"), "u": group("u"), "y": group("y"),
        "ybar": group("ybar"), "delta": group("delta"),
    }


# --- metric tables -----------------------------------------------------


def write_metrics_csv(series: MetricsSeries, path) -> None:
    header = ["k", "safe", "k_f", "tc_seconds", "impact", "d_u", "t_u", "min_distance"]
    lines = [_csv_row(header)]
    for k in range(len(series)):
        lines.append(
            _csv_row(
                [
                    str(k),
                    "1" if series.safe[k] else "0",
                    str(int(series.k_f[k])),
                    format_float(series.tc_seconds[k]),
                    format_float(series.impact[k]),
                    format_float(series.d_u[k]),
                    format_float(series.t_u[k]),
                    format_float(series.min_distance[k]),
                ]
            )
        )
    _write_text(path, "".join(lines))


def _verdict_json(k: int, v: MonitorVerdict) -> str:
    payload = {
        "k": k,
        "safe": v.safe,
        "k_f": v.k_f,
        "violated_constraint": v.violated_constraint,
        "center_unsafe": v.center_unsafe,
        "tc_seconds": v.tc_seconds,
        "impact": v.impact,
        "min_distance": min(v.per_step_min_distance) if v.per_step_min_distance else None,
        "baseline_du": v.baseline_du,
        "baseline_tu": v.baseline_tu,
        "per_step_min_distance": list(v.per_step_min_distance),
    }
    return canonical_json(payload)


def write_verdicts_jsonl(verdicts, path) -> None:
    """Write (k, MonitorVerdict) pairs as one JSON object per line."""
    lines = [_verdict_json(k, v) + "\n" for k, v in verdicts]
    _write_text(path, "".join(lines))


def write_table_csv(path, columns, rows) -> None:
    """Generic numeric table writer: rows are dicts keyed by column name.

    Integers keep their type; everything else goes through
    :func:`format_float`.  Missing cells are an error — schemas here are
    fixed, not extensible.
    """
    lines = [_csv_row(list(columns))]
    for i, row in enumerate(rows):
        missing = [c for c in columns if c not in row]
        if missing:
            raise SchemaError(f"row {i}: missing columns {', '.join(missing)}")
        cells = []
        for c in columns:
            val = row[c]
            if isinstance(val, (bool, np.bool_)):
                cells.append("1" if val else "0")
            elif isinstance(val, (int, np.integer)):
                cells.append(str(int(val)))
            else:
                cells.append(format_float(val))
        lines.append(_csv_row(cells))
    _write_text(path, "".join(lines))
