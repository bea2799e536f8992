"""Optimal discounted hitting cost and bang-bang policy over the circle.

    python3 scripts/hitting_profile.py --lambda 3 --out out/profile [--plot]
"""

import argparse
import json
from pathlib import Path

from qhjb.hjb_hitting import Grid, center_slopes, value_iteration
from qhjb.sde_core import SystemParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, default=10.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--lambda", dest="lam", type=float, default=3.0)
    ap.add_argument("--n", type=int, default=401)
    ap.add_argument("--out", type=Path, default=Path("out/profile"))
    ap.add_argument("--plot", action="store_true")
    a = ap.parse_args()

    a.out.mkdir(parents=True, exist_ok=True)
    p = SystemParams(a.gamma, a.omega, a.lam)
    sol = value_iteration(Grid(a.n), p)
    sol.write_csv(a.out / "hitting.csv")
    left, right = center_slopes(sol.values, sol.grid)
    summary = {**sol.metadata(), "S0": sol.value_at(0.0), "slope_left": left, "slope_right": right}
    (a.out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    print(f"S(0) = {summary['S0']:.7f}  slopes at 0: {left:+.5f} / {right:+.5f}")

    if a.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
        ax1.plot(sol.nodes, sol.values)
        ax1.set_ylabel("S(theta)")
        ax2.step(sol.nodes, sol.controls, where="mid")
        ax2.set_ylabel("v*(theta)")
        ax2.set_xlabel("theta")
        fig.tight_layout()
        fig.savefig(a.out / "hitting.png", dpi=150)


if __name__ == "__main__":
    main()
