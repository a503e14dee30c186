"""Stand-up feasibility sweep over the reaction wheel torque bound.

Prints one line per torque level: whether both pivot steps complete
with the default pre-spin, the step sweeps, and the peak wheel rate.
The transition sits just above the static bound printed at the top.
"""

import argparse
import math
import sys

from rwusim.params import default_params, static_torque_bound
from rwusim.standup2d import InfeasibleTorqueError, simulate_standup

DEG = math.pi / 180.0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--omega0", type=float, default=-280.0,
                    help="pre-spin rate ahead of each step, rad/s")
    ap.add_argument("--lo", type=float, default=0.70)
    ap.add_argument("--hi", type=float, default=1.30)
    ap.add_argument("--step", type=float, default=0.05)
    args = ap.parse_args()

    params = default_params()
    print(f"static torque bound: {static_torque_bound(params):.4f} Nm")
    print(f"{'torque':>8} {'result':>10} {'sweep1':>8} {'sweep2':>8} "
          f"{'peak rate':>10}")
    tau = args.lo
    while tau <= args.hi + 1e-9:
        try:
            tr = simulate_standup(params, tau, args.omega0)
        except InfeasibleTorqueError:
            print(f"{tau:8.2f} {'envelope':>10}")
            tau += args.step
            continue
        if tr.success:
            s1, s2 = (s / DEG for s in tr.step_sweeps)
            print(f"{tau:8.2f} {'stands':>10} {s1:7.1f}d {s2:7.1f}d "
                  f"{tr.peak_omega:8.1f}")
        else:
            print(f"{tau:8.2f} {'stalls':>10}")
        tau += args.step
    return 0


if __name__ == "__main__":
    sys.exit(main())
