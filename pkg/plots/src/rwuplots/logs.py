"""Reading the simulator's CSV logs into plain column arrays.

The plots package talks to the simulator only through these files, so
the column contract is restated here rather than imported.
"""

from __future__ import annotations

import csv
from pathlib import Path

LOG_COLUMNS = (
    "t",
    "q1", "q2", "q3", "q4", "q5",
    "dq1", "dq2", "dq3", "dq4", "dq5",
    "x", "y",
    "q1A", "q2A", "q1G", "q2G", "q3G",
    "q1_hat", "q2_hat", "pivot_ax",
    "u1", "u2", "i1", "i2",
    "phase", "dist_flag",
)

TEXT_COLUMNS = ("phase",)


class LogFormatError(ValueError):
    """The file is not a simulator log in the expected shape."""


def read_log(path: str | Path) -> dict[str, list]:
    """Parse one log into {column: list}; floats except the phase."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd, ()))
        if not header:
            raise LogFormatError(f"{path}: empty file")
        unknown = set(header) - set(LOG_COLUMNS)
        if unknown:
            raise LogFormatError(
                f"{path}: unrecognized column {sorted(unknown)[0]!r}")
        cols: dict[str, list] = {name: [] for name in header}
        for rec in rd:
            if len(rec) != len(header):
                raise LogFormatError(
                    f"{path}: row has {len(rec)} fields, header has "
                    f"{len(header)}")
            for name, v in zip(header, rec):
                cols[name].append(v if name in TEXT_COLUMNS else float(v))
    return cols


def require_columns(cols: dict[str, list], needed: tuple[str, ...],
                    path: str) -> None:
    for name in needed:
        if name not in cols:
            raise LogFormatError(f"{path}: missing column {name!r}")


def lowpass(values: list[float], cutoff_hz: float, Ts: float) -> list[float]:
    """First-order display low-pass, zero initial state."""
    import math
    a = 1.0 - math.exp(-2.0 * math.pi * cutoff_hz * Ts)
    y = 0.0
    out = []
    for v in values:
        y += a * (v - y)
        out.append(y)
    return out
