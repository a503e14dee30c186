"""Figure regeneration entry point: a directory of logs in, SVGs out.

Known log stems map to figure kinds; anything recognizable in the
input directory is rendered, missing stems are skipped with a note.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import PlotSpec, plot
from .logs import LogFormatError

# (figure name, kind, input stems)
DEFAULT_FIGURES = (
    ("standup", "standup", ("standup",)),
    ("standup_maneuver", "maneuver", ("standup",)),
    ("rollup_maneuver", "maneuver", ("rollup",)),
    ("balance", "balance", ("balance",)),
    ("balance_push", "balance", ("balance_push",)),
    ("ablation", "ablation", ("ablation_on", "ablation_off")),
)


def build_specs(log_dir: Path, out_dir: Path) -> tuple[list[PlotSpec], list[str]]:
    specs: list[PlotSpec] = []
    skipped: list[str] = []
    for name, kind, stems in DEFAULT_FIGURES:
        paths = [log_dir / f"{stem}.csv" for stem in stems]
        if all(p.exists() for p in paths):
            specs.append(PlotSpec(inputs=tuple(str(p) for p in paths),
                                  kind=kind,
                                  out=str(out_dir / f"{name}.svg")))
        else:
            skipped.append(name)
    return specs, skipped


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="rwuplots",
        description="regenerate figures from simulator CSV logs")
    ap.add_argument("--logs", required=True,
                    help="directory containing the CSV logs")
    ap.add_argument("--out", required=True,
                    help="directory to write SVG figures into")
    args = ap.parse_args(argv)

    log_dir = Path(args.logs)
    if not log_dir.is_dir():
        print(f"error: {log_dir} is not a directory", file=sys.stderr)
        return 1
    specs, skipped = build_specs(log_dir, Path(args.out))
    if not specs:
        print(f"error: no recognizable logs under {log_dir}",
              file=sys.stderr)
        return 1
    for name in skipped:
        print(f"skipping {name}: missing input log(s)")
    for spec in specs:
        try:
            out = plot(spec)
        except LogFormatError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
