"""Command-line front end: run scenarios, print gains, check stand-up.

Three subcommands. `simulate` runs a scenario config to a CSV log plus
a JSON summary, `lqr` prints the discretized blocks and feedback rows,
`standup-check` reports whether a torque/pre-spin pair self-erects.

Exit codes: 0 success, 1 usage or config error, 2 controlled failure
(the scenario fell, or the stand-up is infeasible).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .control import ManeuverPhase, paper_preset_gains, synthesize_gains, zoh_discretize
from .dynamics3d import linearize_upright
from .params import ParamError, load_params
from .simloop import ConfigError, LogRow, ScenarioConfig, SimLog, run_scenario, success_from_rows
from .standup2d import InfeasibleTorqueError, derive_pivot_geometry, simulate_standup

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2

# bit-exact column order of the log format
CSV_COLUMNS = (
    "t",
    "q1", "q2", "q3", "q4", "q5",
    "dq1", "dq2", "dq3", "dq4", "dq5",
    "x", "y",
    "q1A", "q2A", "q1G", "q2G", "q3G",
    "q1_hat", "q2_hat", "pivot_ax",
    "u1", "u2", "i1", "i2",
    "phase", "dist_flag",
)

DEG = math.pi / 180.0
RECOVERY_BAND = 1.0 * DEG


def _fmt(v: float) -> str:
    """Shortest decimal that round-trips through float()."""
    return repr(float(v))


def write_log_csv(log: SimLog, path: str | Path) -> None:
    """Write the rows in the fixed column order, floats round-trippable."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in log.rows:
            w.writerow(
                [_fmt(r.t)]
                + [_fmt(v) for v in r.q]
                + [_fmt(v) for v in r.dq]
                + [_fmt(r.x), _fmt(r.y),
                   _fmt(r.q1A), _fmt(r.q2A),
                   _fmt(r.q1G), _fmt(r.q2G), _fmt(r.q3G),
                   _fmt(r.q1_hat), _fmt(r.q2_hat), _fmt(r.pivot_ax),
                   _fmt(r.u1), _fmt(r.u2), _fmt(r.i1), _fmt(r.i2),
                   r.phase, str(r.dist_flag)]
            )


def read_log_csv(path: str | Path) -> list[LogRow]:
    """Parse a log back into rows; the in-memory energy column is absent
    from the format and comes back as nan."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd, ()))
        if header != CSV_COLUMNS:
            raise ConfigError(f"unrecognized log header: {header!r}")
        rows = []
        for rec in rd:
            if len(rec) != len(CSV_COLUMNS):
                raise ConfigError(f"log row has {len(rec)} fields, expected "
                                  f"{len(CSV_COLUMNS)}")
            f = [float(v) for v in rec[:25]]
            rows.append(LogRow(
                t=f[0], q=tuple(f[1:6]), dq=tuple(f[6:11]),
                x=f[11], y=f[12], energy=math.nan,
                q1A=f[13], q2A=f[14], q1G=f[15], q2G=f[16], q3G=f[17],
                q1_hat=f[18], q2_hat=f[19], pivot_ax=f[20],
                u1=f[21], u2=f[22], i1=f[23], i2=f[24],
                phase=rec[25], dist_flag=int(rec[26]),
            ))
    return rows


@dataclass(frozen=True)
class RunSummary:
    """Headline numbers of one run, recomputable from its CSV alone."""

    scenario: str
    success: bool
    peak_q1_deg: float
    peak_q2_deg: float
    peak_u: float
    recovery_time: float | None
    phase_timeline: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "success": self.success,
            "peak_q1_deg": self.peak_q1_deg,
            "peak_q2_deg": self.peak_q2_deg,
            "peak_u": self.peak_u,
            "recovery_time": self.recovery_time,
            "phase_timeline": [[p, t] for p, t in self.phase_timeline],
        }


def summarize(rows: list[LogRow], cfg: ScenarioConfig) -> RunSummary:
    """Summary from logged rows only, so a CSV round-trip reproduces it."""
    peak_q1 = max((abs(r.q[0]) for r in rows), default=0.0)
    peak_q2 = max((abs(r.q[1]) for r in rows), default=0.0)
    peak_u = max((max(abs(r.u1), abs(r.u2)) for r in rows), default=0.0)

    # earliest tick after which both tilt estimates stay inside one
    # degree through the end of the log
    recovery: float | None = None
    for r in reversed(rows):
        if max(abs(r.q1_hat), abs(r.q2_hat)) < RECOVERY_BAND:
            recovery = r.t
        else:
            break
    if rows and rows[-1].phase == ManeuverPhase.Fallen.name:
        recovery = None

    timeline: list[tuple[str, float]] = []
    for r in rows:
        if not timeline or timeline[-1][0] != r.phase:
            timeline.append((r.phase, r.t))

    return RunSummary(
        scenario=cfg.maneuver,
        success=success_from_rows(rows, cfg),
        peak_q1_deg=peak_q1 / DEG,
        peak_q2_deg=peak_q2 / DEG,
        peak_u=peak_u,
        recovery_time=recovery,
        phase_timeline=tuple(timeline),
    )


def summary_path(out_path: str | Path) -> Path:
    return Path(out_path).with_suffix(".summary.json")


def _load_scenario(config_path: str | Path) -> ScenarioConfig:
    with open(config_path) as fh:
        doc = json.load(fh)
    return ScenarioConfig.from_dict(doc)


def _run_one(config_path: str, out_path: str, seed: int | None,
             params_path: str | None = None) -> int:
    """Run a single scenario file to CSV + summary; returns the exit code.

    Top level so a process pool can pickle it for batch runs.
    """
    cfg = _load_scenario(config_path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    params = load_params(params_path) if params_path else None
    log = run_scenario(cfg, params)
    write_log_csv(log, out_path)
    summ = summarize(log.rows, cfg)
    doc = summ.to_dict()
    if log.failure:
        doc["failure"] = log.failure
    with open(summary_path(out_path), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return EXIT_OK if log.success else EXIT_FAILED


def cmd_simulate(config_path: str, out_path: str, seed: int | None = None,
                 jobs: int = 1, params_path: str | None = None) -> int:
    """Run one scenario, or every *.json under a config directory."""
    cpath = Path(config_path)
    try:
        if cpath.is_dir():
            return _run_batch(cpath, Path(out_path), seed, jobs, params_path)
        return _run_one(str(cpath), str(out_path), seed, params_path)
    except (ConfigError, ParamError, json.JSONDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def _run_batch(config_dir: Path, out_dir: Path, seed: int | None,
               jobs: int, params_path: str | None) -> int:
    """Run every config in a directory; outputs keep the config stems.

    Scenarios are independent, so they may run in parallel; results are
    only collected after each worker finishes.
    """
    configs = sorted(config_dir.glob("*.json"))
    if not configs:
        print(f"error: no *.json configs under {config_dir}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = [out_dir / (c.stem + ".csv") for c in configs]
    n = len(configs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_run_one, map(str, configs),
                                  map(str, outs), [seed] * n,
                                  [params_path] * n))
    else:
        codes = [_run_one(str(c), str(o), seed, params_path)
                 for c, o in zip(configs, outs)]
    return max(codes)


def _parse_weights(text: str, n: int) -> tuple[float, ...]:
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated weights, got "
                         f"{len(parts)}")
    return parts


def cmd_lqr(params_path: str, preset: str = "synthesized",
            q1: str | None = None, q2: str | None = None,
            r1: float | None = None, r2: float | None = None) -> int:
    """Print the discrete blocks and feedback rows as JSON."""
    try:
        params = load_params(params_path)
        lm = linearize_upright(params)
        Ts = params.Ts_control
        Ad1, Bd1 = zoh_discretize(lm.A1, lm.B1, Ts)
        Ad2, Bd2 = zoh_discretize(lm.A2, lm.B2, Ts)
        if preset == "paper":
            gains = paper_preset_gains(params)
        else:
            kw = {}
            if q1 is not None:
                kw["Q1"] = _parse_weights(q1, 4)
            if q2 is not None:
                kw["Q2"] = _parse_weights(q2, 4)
            if r1 is not None:
                kw["R1"] = r1
            if r2 is not None:
                kw["R2"] = r2
            gains = synthesize_gains(params, **kw)
    except (ParamError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    doc = {
        "Ts": Ts,
        "Ad1": Ad1.tolist(), "Bd1": Bd1.tolist(),
        "Ad2": Ad2.tolist(), "Bd2": Bd2.tolist(),
        "K1": gains.K1.tolist(), "K2": gains.K2.tolist(),
    }
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_standup_check(params_path: str, torque: float, omega0: float) -> int:
    """Report whether the torque/pre-spin pair completes both steps."""
    try:
        params = load_params(params_path)
    except (ParamError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        tr = simulate_standup(params, torque, omega0)
    except InfeasibleTorqueError as e:
        doc = {"feasible": False, "reason": str(e)}
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return EXIT_FAILED
    doc = {
        "feasible": tr.success,
        "step_sweeps_deg": [s / DEG for s in tr.step_sweeps],
        "assist_sweep_deg": derive_pivot_geometry(params, "C1").assist_from_start / DEG,
        "peak_omega": tr.peak_omega,
        "duration": tr.duration,
    }
    if not tr.success:
        doc["reason"] = tr.failure_reason
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK if tr.success else EXIT_FAILED


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage, which collides with the controlled
    # failure code; usage problems are exit 1 here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rwusim",
                description="reaction-wheel unicycle simulation lab")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run a scenario to CSV + summary")
    ps.add_argument("--config", required=True,
                    help="scenario JSON, or a directory of them")
    ps.add_argument("--out", required=True,
                    help="CSV path, or an output directory for batches")
    ps.add_argument("--seed", type=int, default=None,
                    help="override the config seed")
    ps.add_argument("--jobs", type=int, default=1,
                    help="parallel workers for batch directories")
    ps.add_argument("--params", default=None,
                    help="robot parameter JSON (default: built-in robot)")

    pl = sub.add_parser("lqr", help="print discrete blocks and gain rows")
    pl.add_argument("--params", required=True, help="robot parameter JSON")
    pl.add_argument("--preset", choices=("paper", "synthesized"),
                    default="synthesized")
    pl.add_argument("--q1", help="4 comma-separated state weights, block 1")
    pl.add_argument("--q2", help="4 comma-separated state weights, block 2")
    pl.add_argument("--r1", type=float, help="input weight, block 1")
    pl.add_argument("--r2", type=float, help="input weight, block 2")

    pc = sub.add_parser("standup-check",
                        help="feasibility of a stand-up torque/pre-spin pair")
    pc.add_argument("--params", required=True, help="robot parameter JSON")
    pc.add_argument("--torque", type=float, required=True,
                    help="reaction wheel torque bound, Nm")
    pc.add_argument("--omega0", type=float, required=True,
                    help="pre-spin rate ahead of each step, rad/s")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, args.seed, args.jobs,
                            args.params)
    if args.command == "lqr":
        return cmd_lqr(args.params, args.preset,
                       args.q1, args.q2, args.r1, args.r2)
    return cmd_standup_check(args.params, args.torque, args.omega0)


if __name__ == "__main__":
    raise SystemExit(main())
