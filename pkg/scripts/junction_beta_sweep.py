"""Sweep beta = L*EJ for the capacitor, inductor and junction loop.

Usage: python3 scripts/junction_beta_sweep.py

For each beta the reduction either certifies the implicit inductor flux or
stops with a rank obstruction; the curvature of the effective potential at
phi = pi changes sign at beta = 1.
"""

import math
from fractions import Fraction

from fjq import ObstructionReport, parse_netlist, run_reduction
from fjq.energy_symbolics import parse_expr

TEMPLATE = """node a b c
branch C cap a b C=1
branch L ind b c L={beta}
branch J josephson c a EJ=1 phi0=2*pi
"""


def main():
    print(f"{'beta':>6} {'outcome':<36} {'V_pp(pi)':>9}")
    for beta in (Fraction(1, 4), Fraction(1, 2), Fraction(9, 10), Fraction(1),
                 Fraction(11, 10), Fraction(2), Fraction(5)):
        out = run_reduction(parse_netlist(TEMPLATE.format(beta=beta)))
        if isinstance(out, ObstructionReport):
            outcome = f"{out.kind.value}: {out.witness_text}"
        else:
            outcome = f"{out.n_pairs} pair, {out.implicit[0].verdict}"
        pot = parse_expr(f"-(cos(phi) + {beta}/4*cos(2*phi))", ["phi"])
        curv = pot.diff(0).diff(0).evaluate([math.pi])
        print(f"{str(beta):>6} {outcome:<36} {curv:>9.3f}")


if __name__ == "__main__":
    main()
