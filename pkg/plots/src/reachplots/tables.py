"""Readers for the monitoring toolchain's output tables.

This package deliberately does not import the tool that writes these
files; the headers below are the entire coupling surface, restated here
so that a drift in either direction fails loudly as a
:class:`SchemaError` instead of silently changing a figure.  Cells are
plain decimal floats at full precision, so parsing with :func:`float`
round-trips exactly; ``nan`` and ``inf`` are legitimate cell values
(an undefined metric and an unbounded one, respectively) and are kept
as such — masking them is the figure builders' job, not the reader's.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError

__all__ = [
    "RATES_COLUMNS",
    "ROC_COLUMNS",
    "METRICS_COLUMNS",
    "BENCH_COLUMNS",
    "Table",
    "read_table",
    "require_columns",
]

RATES_COLUMNS = (
    "k_horizon", "trials", "tp", "fp", "tn", "fn", "other",
    "tpr", "tpr_lo", "tpr_hi", "fpr", "fpr_lo", "fpr_hi",
    "tnr", "tnr_lo", "tnr_hi", "fnr", "fnr_lo", "fnr_hi",
)
ROC_COLUMNS = ("fpr", "tpr", "k_horizon")
METRICS_COLUMNS = (
    "k", "safe", "k_f", "tc_seconds", "impact", "d_u", "t_u", "min_distance",
)
BENCH_COLUMNS = (
    "k_horizon", "constraints", "n", "checks",
    "mean_seconds", "p50_seconds", "p95_seconds", "max_seconds",
)


@dataclass(frozen=True)
class Table:
    """One parsed CSV: the header as written plus float-valued rows."""

    path: str
    columns: tuple[str, ...]
    rows: tuple[dict[str, float], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows]


def read_table(path) -> Table:
    """Parse a CSV table, converting every cell to float.

    Raises :class:`SchemaError` for a missing file, an empty file, a
    header-only file, ragged rows, or a non-numeric cell.
    """
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: file not found")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{p}: empty file")
        columns = tuple(reader.fieldnames)
        rows: list[dict[str, float]] = []
        for i, raw in enumerate(reader):
            if None in raw or None in raw.values():
                raise SchemaError(f"{p}: row {i} does not match the header width")
            converted: dict[str, float] = {}
            for name, cell in raw.items():
                try:
                    converted[name] = float(cell)
                except ValueError as exc:
                    raise SchemaError(
                        f"{p}: row {i}, column {name}: {cell!r} is not numeric"
                    ) from exc
            rows.append(converted)
    if not rows:
        raise SchemaError(f"{p}: no data rows")
    return Table(path=str(p), columns=columns, rows=tuple(rows))


def require_columns(table: Table, needed) -> None:
    """Raise one :class:`SchemaError` naming every missing column."""
    missing = [name for name in needed if name not in table.columns]
    if missing:
        raise SchemaError(f"{table.path} is missing columns: {', '.join(missing)}")
