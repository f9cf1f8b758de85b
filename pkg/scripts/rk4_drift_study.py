"""Energy drift of the LC tank against the step size, for RK4 and implicit midpoint.

Usage: python3 scripts/rk4_drift_study.py [--periods N]

RK4 drift falls as dt^4; the implicit midpoint rule conserves the quadratic
energy up to the Newton tolerance at any step.
"""

import argparse
from pathlib import Path

import numpy as np

from fjq import load_netlist, run_reduction
from fjq.dynamics import SimConfig, characteristic_period, integrate

ROOT = Path(__file__).resolve().parent.parent


def drift(model, cfg, x0):
    e = integrate(model, cfg, x0).energy
    return float(np.max(np.abs(e - e[0]))) / abs(e[0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--periods", type=float, default=10)
    args = ap.parse_args()
    model = run_reduction(load_netlist(ROOT / "circuits" / "lc.net"))
    period = characteristic_period(model)
    print(f"{'steps/period':>12} {'RK4':>10} {'midpoint':>10}")
    for per in (50, 100, 200, 500, 1000, 2000):
        rk = drift(model, SimConfig(args.periods * period, period / per), [1.0, 0.5])
        mp = drift(model, SimConfig(args.periods * period, period / per, method="ImplicitMidpoint"), [1.0, 0.5])
        print(f"{per:>12} {rk:>10.2e} {mp:>10.2e}")


if __name__ == "__main__":
    main()
