"""Table of state-preparation time bounds over a range of target purities."""

import argparse
import math

from qhjb.bounds import PurityTarget, preparation_bounds
from qhjb.sde_core import SystemParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--omega", type=float, default=10.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1)
    ap.add_argument("--purities", default="0.6,0.75,0.9,0.99")
    ap.add_argument("--span", type=float, default=math.pi)
    a = ap.parse_args()

    p = SystemParams(a.gamma, a.omega, a.lam)
    print("P       tau_wr    t_jacobs  tau_UB    t_LB      t_UB      ordered")
    for P in (float(x) for x in a.purities.split(",")):
        b = preparation_bounds(PurityTarget(P, a.span), p)
        print(f"{P:<7g} {b.tau_wr:.6f}  {b.t_jacobs:.6f}  {b.tau_UB:.6f}  "
              f"{b.t_LB:.6f}  {b.t_UB:.6f}  {b.ordered}")


if __name__ == "__main__":
    main()
