"""Five deterministic figure builders over the monitoring tables.

Rendering is pure consumption: each figure is built from one CSV and
written as a PNG at a fixed size, DPI, and style; inputs are never
modified.  Byte-identical output for identical input is part of the
contract, so the style is pinned here instead of inherited from
whatever matplotlibrc happens to be installed, and the PNG metadata is
a constant (the default writer already stamps no timestamps).

The ``bench_scaling`` builder re-fits the latency sweeps with the same
least-squares arithmetic the benchmark writer uses, so its annotated
slope and R² agree with the published fit file to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # decided before pyplot loads; no display needed

import matplotlib.pyplot as plt
import numpy as np

from .errors import SchemaError
from .tables import (
    BENCH_COLUMNS,
    METRICS_COLUMNS,
    RATES_COLUMNS,
    ROC_COLUMNS,
    Table,
    read_table,
    require_columns,
)

__all__ = ["KINDS", "DPI", "FigureSpec", "RenderResult", "render"]

KINDS = (
    "rates_vs_k",
    "roc3d",
    "scenario_timeseries",
    "error_comparison",
    "bench_scaling",
)

DPI = 120

_STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.titlesize": 10.0,
    "axes.labelsize": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 4.0,
    "legend.framealpha": 0.9,
    "figure.facecolor": "white",
    "savefig.facecolor": "white",
}


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: input tables, figure kind, destination, labeling.

    ``damage_step`` is consumed by ``error_comparison`` only — the first
    step at which the true state is unsafe, which fixes the ground-truth
    time-to-damage line the two predictors are compared against.
    """

    kind: str
    inputs: tuple[str, ...]
    out: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    damage_step: int | None = None


@dataclass(frozen=True)
class RenderResult:
    """Where the figure landed plus any numbers annotated onto it."""

    path: str
    annotations: dict[str, float] = field(default_factory=dict)


def render(spec: FigureSpec) -> RenderResult:
    """Draw ``spec`` to a PNG file and report any fitted numbers.

    Raises :class:`SchemaError` when the kind is unknown, the input
    count is wrong, or the table does not carry the required columns.
    """
    if spec.kind not in KINDS:
        raise SchemaError(
            f"unknown figure kind {spec.kind!r}; expected one of {', '.join(KINDS)}"
        )
    if len(spec.inputs) != 1:
        raise SchemaError(
            f"{spec.kind} takes exactly one input table, got {len(spec.inputs)}"
        )
    table = read_table(spec.inputs[0])
    with matplotlib.rc_context(_STYLE):
        fig, annotations = _BUILDERS[spec.kind](table, spec)
        try:
            fig.savefig(spec.out, dpi=DPI, format="png",
                        metadata={"Software": "reachplots"})
        finally:
            plt.close(fig)
    return RenderResult(path=str(spec.out), annotations=annotations)


def _masked(values) -> np.ndarray:
    """±inf → nan so one unbounded cell cannot blow up an axis."""
    v = np.asarray(values, dtype=float)
    return np.where(np.isfinite(v), v, np.nan)


def _rates_vs_k(table: Table, spec: FigureSpec):
    require_columns(table, RATES_COLUMNS)
    k = np.asarray(table.column("k_horizon"))
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    series = (
        ("tpr", "TP rate", "tab:green"),
        ("fpr", "FP rate", "tab:red"),
        ("tnr", "TN rate", "tab:blue"),
        ("fnr", "FN rate", "tab:orange"),
    )
    for name, label, color in series:
        ax.plot(k, table.column(name), marker="o", color=color, label=label)
    # Confidence bands only for the pair that decides the operating point.
    for name, color in (("tpr", "tab:green"), ("fpr", "tab:red")):
        ax.fill_between(k, table.column(f"{name}_lo"), table.column(f"{name}_hi"),
                        color=color, alpha=0.15, linewidth=0)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel(spec.xlabel or "prediction horizon K (steps)")
    ax.set_ylabel(spec.ylabel or "rate")
    ax.set_title(spec.title or "classification rates vs. prediction horizon")
    ax.legend(loc="center right")
    return fig, {}


def _roc3d(table: Table, spec: FigureSpec):
    require_columns(table, ROC_COLUMNS)
    order = np.argsort(np.asarray(table.column("k_horizon")), kind="stable")
    fpr = np.asarray(table.column("fpr"))[order]
    tpr = np.asarray(table.column("tpr"))[order]
    k = np.asarray(table.column("k_horizon"))[order]
    fig = plt.figure(figsize=(6.4, 5.4))
    ax = fig.add_subplot(projection="3d")
    ax.plot(fpr, tpr, k, color="tab:blue", linewidth=1.2)
    points = ax.scatter(fpr, tpr, k, c=k, cmap="viridis", depthshade=False, s=24)
    fig.colorbar(points, ax=ax, shrink=0.55, pad=0.1, label="prediction horizon K")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel(spec.xlabel or "false positive rate")
    ax.set_ylabel(spec.ylabel or "true positive rate")
    ax.set_zlabel("K (steps)")
    ax.view_init(elev=22.0, azim=-60.0)
    ax.set_title(spec.title or "operating points by prediction horizon")
    return fig, {}


def _scenario_timeseries(table: Table, spec: FigureSpec):
    require_columns(table, METRICS_COLUMNS)
    k = np.asarray(table.column("k"))
    safe = np.asarray(table.column("safe")) > 0.5
    fig, axes = plt.subplots(5, 1, figsize=(7.0, 9.6), sharex=True,
                             constrained_layout=True)

    def shade(ax):
        """Tint every step with an unsafe verdict."""
        ax.fill_between(k, 0, 1, where=~safe, transform=ax.get_xaxis_transform(),
                        color="tab:red", alpha=0.12, linewidth=0)

    for ax in axes:
        shade(ax)
    # k_f = -1 encodes "no predicted violation within the horizon".
    axes[0].plot(k, table.column("k_f"), color="tab:blue", drawstyle="steps-post")
    axes[0].set_ylabel("first unsafe\noffset k_f")
    axes[1].plot(k, _masked(table.column("tc_seconds")), color="tab:blue")
    axes[1].set_ylabel("time to\nunsafe Tc (s)")
    axes[2].plot(k, table.column("impact"), color="tab:purple")
    axes[2].set_ylim(-0.05, 1.05)
    axes[2].set_ylabel("impact")
    axes[3].plot(k, _masked(table.column("min_distance")), color="tab:green")
    axes[3].axhline(0.0, color="black", linewidth=0.8)
    axes[3].set_ylabel("reach-set\nclearance")
    axes[4].plot(k, _masked(table.column("d_u")), color="tab:olive", label="d_u")
    twin = axes[4].twinx()
    twin.plot(k, _masked(table.column("t_u")), color="tab:gray", label="t_u (s)")
    twin.grid(False)
    axes[4].set_ylabel("baseline d_u")
    twin.set_ylabel("baseline t_u (s)")
    handles = axes[4].get_lines() + twin.get_lines()
    axes[4].legend(handles, [h.get_label() for h in handles], loc="upper right")
    axes[4].set_xlabel(spec.xlabel or "step")
    fig.suptitle(spec.title or f"monitor metrics: {Path(table.path).stem}")
    return fig, {}


def _time_step(table: Table) -> float:
    """Recover the sampling period from ``tc_seconds = k_f * dt``.

    Any row with a positive first-violation offset determines it; the
    writer stores full-precision floats, so the quotient is exact up to
    one rounding.
    """
    for row in table.rows:
        if row["k_f"] >= 1 and math.isfinite(row["tc_seconds"]) and row["tc_seconds"] > 0:
            return row["tc_seconds"] / row["k_f"]
    raise SchemaError(
        f"{table.path}: cannot recover the sampling period "
        "(no row with k_f >= 1 and finite tc_seconds)"
    )


def _error_comparison(table: Table, spec: FigureSpec):
    require_columns(table, METRICS_COLUMNS)
    if spec.damage_step is None:
        raise SchemaError(
            "error_comparison requires damage_step: the first step whose "
            "true state is unsafe"
        )
    damage = int(spec.damage_step)
    if damage < 1:
        raise SchemaError(f"damage_step must be >= 1, got {damage}")
    dt = _time_step(table)
    k = np.asarray(table.column("k"))
    mask = k < damage
    if not mask.any():
        raise SchemaError(f"damage_step {damage} precedes every row of {table.path}")
    truth = (damage - k[mask]) * dt
    monitor_err = np.abs(_masked(table.column("tc_seconds"))[mask] - truth)
    baseline_err = np.abs(_masked(table.column("t_u"))[mask] - truth)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    ax.plot(k[mask], monitor_err, color="tab:blue", label="|Tc - time to damage|")
    ax.plot(k[mask], baseline_err, color="tab:orange", label="|t_u - time to damage|")
    ax.set_xlabel(spec.xlabel or "step")
    ax.set_ylabel(spec.ylabel or "absolute prediction error (s)")
    ax.set_title(spec.title
                 or "time-to-unsafe error: monitor vs. alarm-rate baseline")
    ax.legend(loc="upper right")
    return fig, {}


def _ols(x, y) -> tuple[float, float, float]:
    """Plain least squares y = slope*x + intercept with R².

    Mirrors the benchmark writer's fit arithmetic operation for
    operation, so the annotation matches its fit file bit for bit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise SchemaError("sweep x values are all identical; nothing to fit")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if syy == 0.0 else 1.0 - float(np.sum(resid**2)) / syy
    return slope, float(intercept), r2


def _split_sweeps(table: Table) -> tuple[list[dict], list[dict]]:
    """Split benchmark rows into the horizon sweep and the constraint sweep.

    The writer emits the horizon sweep first (constraint count held
    fixed), then the constraint sweep (horizon held fixed), so the
    constraint sweep is the maximal trailing run of rows sharing one
    ``k_horizon``.  This reconstruction is exact as long as the horizon
    sweep does not end at the constraint sweep's fixed horizon.
    """
    rows = list(table.rows)
    j = len(rows) - 1
    while j > 0 and rows[j - 1]["k_horizon"] == rows[-1]["k_horizon"]:
        j -= 1
    k_part, c_part = rows[:j], rows[j:]
    if len(k_part) < 2 or len(c_part) < 2:
        raise SchemaError(
            f"{table.path}: need at least two rows in each sweep, "
            f"got {len(k_part)} horizon rows and {len(c_part)} constraint rows"
        )
    if len({row["constraints"] for row in k_part}) != 1:
        raise SchemaError(
            f"{table.path}: horizon-sweep rows do not share one constraint count"
        )
    return k_part, c_part


def _bench_scaling(table: Table, spec: FigureSpec):
    require_columns(table, BENCH_COLUMNS)
    k_part, c_part = _split_sweeps(table)
    k_x = [row["k_horizon"] for row in k_part]
    k_y = [row["mean_seconds"] for row in k_part]
    c_x = [row["constraints"] for row in c_part]
    c_y = [row["mean_seconds"] for row in c_part]
    k_slope, k_intercept, k_r2 = _ols(k_x, k_y)
    c_slope, c_intercept, c_r2 = _ols(c_x, c_y)

    fig, (left, right) = plt.subplots(1, 2, figsize=(8.4, 4.0),
                                      constrained_layout=True)
    for ax, x, y, slope, intercept, r2 in (
        (left, k_x, k_y, k_slope, k_intercept, k_r2),
        (right, c_x, c_y, c_slope, c_intercept, c_r2),
    ):
        ax.plot(x, y, "o", color="tab:blue")
        grid = np.array([min(x), max(x)])
        ax.plot(grid, slope * grid + intercept, color="tab:red", linewidth=1.1)
        ax.text(0.04, 0.94, f"R² = {r2:.6f}", transform=ax.transAxes,
                va="top", ha="left")
        ax.set_ylabel("mean check time (s)")
    left.set_xlabel("prediction horizon K (steps)")
    left.set_title(f"constraints = {int(k_part[0]['constraints'])}")
    right.set_xlabel("constraint count")
    right.set_title(f"K = {int(c_part[0]['k_horizon'])}")
    fig.suptitle(spec.title or "safety-check latency scaling")
    annotations = {
        "k_sweep_slope": k_slope,
        "k_sweep_intercept": k_intercept,
        "k_sweep_r_squared": k_r2,
        "constraint_sweep_slope": c_slope,
        "constraint_sweep_intercept": c_intercept,
        "constraint_sweep_r_squared": c_r2,
    }
    return fig, annotations


_BUILDERS = {
    "rates_vs_k": _rates_vs_k,
    "roc3d": _roc3d,
    "scenario_timeseries": _scenario_timeseries,
    "error_comparison": _error_comparison,
    "bench_scaling": _bench_scaling,
}
