"""Discounted hitting cost versus control strength: Monte Carlo under the
value-iteration policy, the value-iteration curve and the unmeasured rotation.

    QHJB_THREADS=4 python3 scripts/omega_sweep.py --out out/sweep [--plot]
"""

import argparse
import csv
from pathlib import Path

from qhjb.montecarlo import SWEEP_COLUMNS, EnsembleConfig, omega_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omegas", default="3,5,10,20,50,200")
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1)
    ap.add_argument("--ntraj", type=int, default=5000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/sweep"))
    ap.add_argument("--plot", action="store_true")
    a = ap.parse_args()

    omegas = [float(x) for x in a.omegas.split(",")]
    cfg = EnsembleConfig(a.ntraj, dt=a.dt, master_seed=a.seed)
    rows = omega_sweep(omegas, 0.0, cfg, a.gamma, a.lam)
    a.out.mkdir(parents=True, exist_ok=True)
    with open(a.out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([getattr(r, c) for c in SWEEP_COLUMNS])
    for r in rows:
        z = (r.pde_value - r.mc_mean) / r.mc_stderr
        print(f"omega={r.omega:6g}  mc={r.mc_mean:.5f}±{r.mc_stderr:.5f}  "
              f"pde={r.pde_value:.5f} ({z:+.2f} se)  rotation={r.disc_hamiltonian:.5f}")

    if a.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        om = [r.omega for r in rows]
        ax.errorbar(om, [r.mc_mean for r in rows], yerr=[r.mc_stderr for r in rows],
                    fmt="o", label="Monte Carlo")
        ax.plot(om, [r.pde_value for r in rows], "-", label="value iteration")
        ax.plot(om, [r.disc_hamiltonian for r in rows], "--", label="no measurement")
        ax.set_xscale("log")
        ax.set_xlabel("Omega")
        ax.set_ylabel("discounted hitting cost")
        ax.legend()
        fig.tight_layout()
        fig.savefig(a.out / "sweep.png", dpi=150)


if __name__ == "__main__":
    main()
