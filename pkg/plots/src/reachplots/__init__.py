"""Deterministic figures over the safety monitor's output tables.

Five figure kinds, one per table family: classification rates against
the prediction horizon, operating points in (FPR, TPR, K) space, the
per-step metric time series of a monitored run, the monitor-versus-
baseline prediction-error comparison, and the latency-scaling benchmark
with its annotated least-squares fit.  Rendering is read-only and
byte-reproducible: the same input file yields the identical PNG.
"""

from .errors import PlotsError, SchemaError
from .figures import DPI, KINDS, FigureSpec, RenderResult, render
from .tables import (
    BENCH_COLUMNS,
    METRICS_COLUMNS,
    RATES_COLUMNS,
    ROC_COLUMNS,
    Table,
    read_table,
    require_columns,
)

__all__ = [
    "PlotsError",
    "SchemaError",
    "DPI",
    "KINDS",
    "FigureSpec",
    "RenderResult",
    "render",
    "BENCH_COLUMNS",
    "METRICS_COLUMNS",
    "RATES_COLUMNS",
    "ROC_COLUMNS",
    "Table",
    "read_table",
    "require_columns",
]
