"""The four figure kinds regenerated from simulator logs.

standup   two panels: body tilt and reaction wheel rate over time.
balance   tilt estimates plus wheel torques, push windows shaded.
ablation  display-filtered accel pitch, compensated vs. uncompensated,
          overlaid from two logs.
maneuver  true and estimated tilts with the phase sequence banded.

All output is vector (SVG or PDF) with fixed styling and no embedded
timestamps, so regenerating a figure from the same log is
byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .logs import LogFormatError, lowpass, read_log, require_columns

DEG = 180.0 / math.pi
DISPLAY_CUTOFF_HZ = 0.32

KIND_COLUMNS = {
    "standup": ("t", "q1", "dq5", "phase"),
    "balance": ("t", "q1_hat", "q2_hat", "u1", "u2", "dist_flag"),
    "ablation": ("t", "q2A"),
    "maneuver": ("t", "q1", "q2", "q1_hat", "q2_hat", "phase"),
}

KIND_INPUTS = {"standup": 1, "balance": 1, "ablation": 2, "maneuver": 1}

VECTOR_SUFFIXES = (".svg", ".pdf")

# fixed render style; determinism depends on nothing ambient leaking in
RC = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "font.size": 9,
    "font.family": "DejaVu Sans",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "rwuplots",
    "path.simplify": False,
}


@dataclass(frozen=True)
class PlotSpec:
    """One figure: which logs, which kind, where to write it."""

    inputs: tuple[str, ...]
    kind: str
    out: str
    title: str | None = None
    labels: tuple[str, ...] = ()
    xlim: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind not in KIND_COLUMNS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}, expected one of "
                f"{sorted(KIND_COLUMNS)}")
        want = KIND_INPUTS[self.kind]
        if len(self.inputs) != want:
            raise ValueError(
                f"kind {self.kind!r} takes {want} input log(s), got "
                f"{len(self.inputs)}")
        if Path(self.out).suffix not in VECTOR_SUFFIXES:
            raise ValueError(
                f"output must be a vector image {VECTOR_SUFFIXES}, got "
                f"{self.out!r}")


def _phase_runs(t: list[float], phases: list[str]):
    """Contiguous (name, t_start, t_end) spans of the phase column."""
    runs = []
    start = 0
    for i in range(1, len(phases) + 1):
        if i == len(phases) or phases[i] != phases[start]:
            end = t[i] if i < len(t) else t[-1]
            runs.append((phases[start], t[start], end))
            start = i
    return runs


def _shade_phases(ax, t, phases, label_y):
    for i, (name, t0, t1) in enumerate(_phase_runs(t, phases)):
        if i % 2:
            ax.axvspan(t0, t1, color="0.85", zorder=0)
        ax.text(0.5 * (t0 + t1), label_y, name, rotation=90,
                ha="center", va="top", fontsize=6, color="0.35")


def _ts(t: list[float]) -> float:
    if len(t) < 2:
        raise LogFormatError("log needs at least two rows to plot")
    return t[1] - t[0]


def _render_standup(spec: PlotSpec, logs) -> plt.Figure:
    cols = logs[0]
    t = cols["t"]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    ax1.plot(t, [v * DEG for v in cols["q1"]], color="C0")
    ax1.set_ylabel("body tilt [deg]")
    _shade_phases(ax1, t, cols["phase"], ax1.get_ylim()[1])
    ax2.plot(t, cols["dq5"], color="C1")
    ax2.set_ylabel("reaction wheel rate [rad/s]")
    ax2.set_xlabel("time [s]")
    fig.suptitle(spec.title or "stand-up trace")
    return fig


def _render_balance(spec: PlotSpec, logs) -> plt.Figure:
    cols = logs[0]
    t = cols["t"]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    ax1.plot(t, [v * DEG for v in cols["q1_hat"]], color="C0", label="roll")
    ax1.plot(t, [v * DEG for v in cols["q2_hat"]], color="C1", label="pitch")
    ax1.set_ylabel("estimated tilt [deg]")
    ax1.legend(loc="upper right")
    ax2.plot(t, cols["u1"], color="C0", label="reaction wheel")
    ax2.plot(t, cols["u2"], color="C1", label="rolling wheel")
    ax2.set_ylabel("torque [Nm]")
    ax2.set_xlabel("time [s]")
    ax2.legend(loc="upper right")
    flags = cols["dist_flag"]
    for name, t0, t1 in _phase_runs(t, [f > 0 for f in flags]):
        if name:
            for ax in (ax1, ax2):
                ax.axvspan(t0, t1, color="C3", alpha=0.15, zorder=0)
    fig.suptitle(spec.title or "balancing time series")
    return fig


def _render_ablation(spec: PlotSpec, logs) -> plt.Figure:
    labels = spec.labels or ("compensated", "uncompensated")
    fig, ax = plt.subplots()
    for cols, label, color in zip(logs, labels, ("C0", "C3")):
        t = cols["t"]
        y = lowpass(cols["q2A"], DISPLAY_CUTOFF_HZ, _ts(t))
        ax.plot(t, [v * DEG for v in y], color=color, label=label)
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("filtered accel pitch [deg]")
    ax.legend(loc="upper right")
    fig.suptitle(spec.title or "pivot compensation ablation")
    return fig


def _render_maneuver(spec: PlotSpec, logs) -> plt.Figure:
    cols = logs[0]
    t = cols["t"]
    fig, ax = plt.subplots()
    ax.plot(t, [v * DEG for v in cols["q1"]], color="C0", label="roll")
    ax.plot(t, [v * DEG for v in cols["q2"]], color="C1", label="pitch")
    ax.plot(t, [v * DEG for v in cols["q1_hat"]], color="C0", ls="--",
            lw=0.9, label="roll est.")
    ax.plot(t, [v * DEG for v in cols["q2_hat"]], color="C1", ls="--",
            lw=0.9, label="pitch est.")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tilt [deg]")
    ax.legend(loc="upper right")
    _shade_phases(ax, t, cols["phase"], ax.get_ylim()[1])
    fig.suptitle(spec.title or "maneuver trace")
    return fig


_RENDERERS = {
    "standup": _render_standup,
    "balance": _render_balance,
    "ablation": _render_ablation,
    "maneuver": _render_maneuver,
}


def plot(spec: PlotSpec) -> Path:
    """Render one figure to its vector output path and return the path."""
    logs = []
    for path in spec.inputs:
        cols = read_log(path)
        require_columns(cols, KIND_COLUMNS[spec.kind], str(path))
        logs.append(cols)
    with plt.rc_context(RC):
        fig = _RENDERERS[spec.kind](spec, logs)
        try:
            for ax in fig.axes:
                if spec.xlim is not None:
                    ax.set_xlim(*spec.xlim)
            out = Path(spec.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            # strip creation dates so identical inputs give identical
            # bytes
            meta = {"Date": None} if out.suffix == ".svg" \
                else {"CreationDate": None}
            fig.savefig(out, metadata=meta)
        finally:
            plt.close(fig)
    return out
