"""Regenerate every shipped scenario log under logs/.

Runs the batch CLI over configs/scenarios; each run writes a CSV log
and a JSON summary named after its config.
"""

import argparse
import sys
from pathlib import Path

from rwusim.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "logs"),
                    help="output directory (default: logs/)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None,
                    help="override every config's seed")
    args = ap.parse_args()
    argv = ["simulate",
            "--config", str(ROOT / "configs" / "scenarios"),
            "--out", args.out,
            "--jobs", str(args.jobs)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    rc = cli_main(argv)
    print(f"logs written to {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    sys.exit(main())
