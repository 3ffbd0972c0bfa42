"""Trace ingestion, model persistence and report emission.

Numbers written to CSV use 17 significant digits, so identical runs
produce byte-identical files and values survive a parse round trip.
Model JSON relies on ``json``'s shortest-repr float encoding, which is
also round-trip exact for doubles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyTraceError, NegativeValueError, TraceParseError
from .map2 import Map2
from .severity import DplnParams

__all__ = [
    "Trace",
    "fmt",
    "load_map2",
    "load_severity",
    "read_severities",
    "read_trace",
    "save_map2",
    "save_severity",
    "write_csv",
]


def fmt(x) -> str:
    """Fixed 17-significant-digit decimal form of a float."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Trace:
    """Inter-loss durations (days) with optional aligned severities."""

    times: np.ndarray
    severities: np.ndarray | None
    source: str

    @property
    def n(self) -> int:
        return len(self.times)

    def describe(self) -> dict:
        """Mean, median, coefficient of variation and maximum."""
        ts = self.times
        return {
            "n": self.n,
            "mean": float(ts.mean()),
            "median": float(np.median(ts)),
            "cv": float(ts.std() / ts.mean()) if ts.mean() > 0 else math.nan,
            "max": float(ts.max()),
        }


def _parse_rows(path: Path, max_cols: int) -> list[list[float]]:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) > max_cols:
                raise TraceParseError(
                    f"expected at most {max_cols} columns, got {len(parts)}", lineno
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise TraceParseError(f"could not parse {line!r}", lineno) from None
            if any(not math.isfinite(v) for v in vals):
                raise TraceParseError(f"non-finite value in {line!r}", lineno)
            if any(v < 0 for v in vals):
                raise NegativeValueError(f"negative value in {line!r}", lineno)
            rows.append(vals)
    if not rows:
        raise EmptyTraceError(f"{path} holds no data rows")
    return rows


def read_trace(path) -> Trace:
    """Read a one-column (times) or two-column (time, severity) CSV."""
    path = Path(path)
    rows = _parse_rows(path, max_cols=2)
    ncols = {len(r) for r in rows}
    if len(ncols) > 1:
        raise TraceParseError("mixed 1- and 2-column rows", 1)
    times = np.array([r[0] for r in rows])
    severities = np.array([r[1] for r in rows]) if ncols == {2} else None
    return Trace(times=times, severities=severities, source=str(path))


def read_severities(path) -> np.ndarray:
    """Read a one-column CSV of positive severities."""
    path = Path(path)
    rows = _parse_rows(path, max_cols=1)
    vals = np.array([r[0] for r in rows])
    if (vals <= 0).any():
        line = int(np.nonzero(vals <= 0)[0][0]) + 1
        raise NegativeValueError("severities must be positive", line)
    return vals


# ---------------------------------------------------------------------------
# model persistence


def save_map2(m: Map2, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict(), indent=2) + "\n")


def load_map2(path) -> Map2:
    return Map2.from_dict(json.loads(Path(path).read_text()))


def save_severity(p: DplnParams, path) -> None:
    Path(path).write_text(json.dumps(p.to_dict(), indent=2) + "\n")


def load_severity(path) -> DplnParams:
    return DplnParams.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# report emission


def write_csv(path, header: list[str], rows) -> None:
    """Write rows of floats/ints/strings with deterministic formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                cells.append(fmt(cell))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
