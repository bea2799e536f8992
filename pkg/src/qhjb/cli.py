"""
Command-line front end.

Every subcommand writes its outputs plus a ``manifest.json`` into ``--out``.
``qhjb replay MANIFEST --out DIR`` re-runs a manifest; outputs are
bit-identical to the original run.

Exit codes: 0 ok, 1 invalid usage/parameters, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bounds, consistency, hjb_hitting, hjb_horizon, montecarlo
from .sde_core import (
    BangBangPolicy,
    ConstantPolicy,
    GridPolicy,
    SystemParams,
    fmt,
    hitting_time,
    simulate,
    write_trajectory,
)

log = logging.getLogger("qhjb")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command: str, args: dict, out: Path):
        self.command = command
        self.args = args
        self.out = out
        self.outputs: list[str] = []
        self.seeds: list[int] = []
        self.warnings: list[str] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, data) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default))
        return p

    def finish(self, status: int) -> int:
        manifest = {
            "command": self.command,
            "args": self.args,
            "seeds": self.seeds,
            "version": __version__,
            "wall_clock_s": time.perf_counter() - self.t0,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "exit_code": status,
            **self.extra,
        }
        (self.out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
        return status


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _params(a, lam=None) -> SystemParams:
    lam = getattr(a, "lam", 0.0) if lam is None else lam
    if getattr(a, "gamma", None) == 0.0:
        return SystemParams.gamma_limit(a.omega, lam)
    return SystemParams(a.gamma, a.omega, lam)


def _require_dominance(p: SystemParams):
    if not p.omega_dominates:
        raise UsageError(f"omega must exceed 2*gamma (omega={p.omega}, gamma={p.gamma})")


# --- subcommands -----------------------------------------------------------


def cmd_solve_hitting(a, run: Run) -> int:
    p = _params(a)
    _require_dominance(p)
    if p.lam == 0:
        run.warnings.append("lambda = 0: undiscounted problem, experimental (no uniqueness guarantee)")
    sol = hjb_hitting.value_iteration(hjb_hitting.Grid(a.n), p, a.tol, a.max_iter,
                                      raise_on_failure=False)
    sol.write_csv(run.path("hitting.csv"))
    meta = sol.metadata()
    meta["converged"] = sol.residual < a.tol
    run.write_json("hitting.json", meta)
    run.extra["experimental"] = sol.experimental
    print(f"S({0.0}) = {sol.value_at(0.0)!r}  iterations={sol.iterations} residual={sol.residual:.3e}")
    return EXIT_OK if meta["converged"] else EXIT_NUMERIC


def cmd_solve_horizon(a, run: Run) -> int:
    p = _params(a)
    _require_dominance(p)
    sa = hjb_horizon.solve_sa(a.T, p, probes=(a.theta0,), h=a.h, cfl=a.cfl)
    sb = hjb_horizon.solve_sb(a.T, p, grid=sa.grid, probes=(a.theta0,))
    sa.write_csv(run.path("horizon_sa.csv"), every=a.every)
    sb.write_csv(run.path("horizon_sb.csv"), every=a.every)
    res = {
        "theta0": a.theta0, "T": a.T,
        "S_a": sa.value(a.theta0), "S_b": sb.value(a.theta0),
        "expected_final_angle": max(sa.value(a.theta0), sb.value(a.theta0)),
        "grid": {"L": sa.grid.L, "m": sa.grid.m, "h": sa.grid.h, "k": sa.grid.k,
                 "steps": sa.grid.steps},
        "diagnostics": sa.diagnostics,
    }
    run.write_json("horizon.json", res)
    print(f"S^a = {res['S_a']!r}  S^b = {res['S_b']!r}")
    return EXIT_OK


def cmd_reach_time(a, run: Run) -> int:
    p = _params(a)
    _require_dominance(p)
    res = hjb_horizon.reaching_time(a.theta0, p, tol_T=a.tolT, h=a.h, full=True)
    run.write_json("reach.json", res.to_dict())
    print(repr(res.R))
    return EXIT_OK


def _policy(name: str, omega: float):
    if name == "plus":
        return ConstantPolicy(omega)
    if name == "minus":
        return ConstantPolicy(-omega)
    if name == "bangbang":
        return BangBangPolicy(omega)
    raise UsageError(f"unknown policy {name}")


def cmd_simulate(a, run: Run) -> int:
    p = _params(a)
    pol = _policy(a.policy, p.omega)
    run.seeds = [a.seed]
    rows = []
    for i in range(a.ntraj):
        traj = simulate(a.theta0, pol, a.dt, a.tmax, a.seed, a.absorb, p, index=i)
        name = f"traj_{i:05d}.csv"
        for f in write_trajectory(traj, run.out / name, p):
            run.outputs.append(f.name)
        tau = hitting_time(traj) if a.absorb else None
        rows.append((i, tau))
    with open(run.path("hitting_times.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "tau"])
        for i, tau in rows:
            w.writerow([i, "" if tau is None else fmt(tau)])
    return EXIT_OK


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_sweep_omega(a, run: Run) -> int:
    cfg = montecarlo.EnsembleConfig(a.ntraj, dt=a.dt, master_seed=a.seed)
    run.seeds = [a.seed]
    rows = montecarlo.omega_sweep(a.omegas, a.theta0, cfg, a.gamma, a.lam, n_grid=a.n)
    with open(run.path("sweep.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(montecarlo.SWEEP_COLUMNS)
        for r in rows:
            w.writerow([fmt(r.omega), fmt(r.mc_mean), fmt(r.mc_stderr), fmt(r.pde_value),
                        fmt(r.disc_hamiltonian), fmt(r.hamiltonian), r.n_censored])
    errors = {fmt(r.omega): r.error for r in rows if r.error}
    run.extra["row_errors"] = errors
    for om, msg in errors.items():
        run.warnings.append(f"omega={om}: {msg}")
    for r in rows:
        print(f"omega={r.omega:g} mc={r.mc_mean:.6g}±{r.mc_stderr:.2g} pde={r.pde_value:.6g}"
              + (f"  ERROR {r.error}" if r.error else ""))
    return EXIT_NUMERIC if len(errors) == len(rows) else EXIT_OK


def cmd_consistency(a, run: Run) -> int:
    seeds = list(range(a.seed, a.seed + a.nseeds))
    run.seeds = seeds
    params = SystemParams(a.gamma, a.omega)
    report = consistency.run_consistency(seeds, a.dt, params, t_end=a.tend, tol=a.tol)
    run.write_json("consistency.json", report)
    for k, v in report["checks"].items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    print(f"max discrepancy: dt={report['max_discrepancy_dt']:.3e} "
          f"dt/2={report['max_discrepancy_dt_half']:.3e}")
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def cmd_bounds(a, run: Run) -> int:
    p = _params(a)
    _require_dominance(p)
    try:
        target = bounds.PurityTarget(a.P, a.span)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    mc = None
    if a.mc_ntraj:
        cfg = montecarlo.EnsembleConfig(a.mc_ntraj, master_seed=a.seed, t_max=a.mc_tmax)
        run.seeds = [a.seed]

        def mc(start, params):
            st = montecarlo.estimate_hitting_time(start, BangBangPolicy(params.omega), cfg, params)
            return st.mean, st.std_error

    res = bounds.preparation_bounds(
        target, p,
        hitting_solver=lambda th, q: bounds.default_hitting_solver(th, q, n=a.n),
        horizon_solver=lambda th, q: bounds.default_horizon_solver(th, q, tol_T=a.tolT, h=a.h),
        mc_rotation=mc,
    )
    if not res.ordered:
        run.warnings.append("t_LB exceeds t_UB (t_jacobs > tau_wr)")
    run.write_json("bounds.json", res.to_dict())
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {
    "solve-hitting": cmd_solve_hitting,
    "solve-horizon": cmd_solve_horizon,
    "reach-time": cmd_reach_time,
    "simulate": cmd_simulate,
    "sweep-omega": cmd_sweep_omega,
    "consistency-check": cmd_consistency,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qhjb", description=__doc__.splitlines()[1])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, lam=True, lam_default=0.1):
        sp.add_argument("--omega", type=float, default=10.0)
        sp.add_argument("--gamma", type=float, default=1.0,
                        help="0 selects the noiseless (gamma -> 0) configuration")
        if lam:
            sp.add_argument("--lambda", dest="lam", type=float, default=lam_default)
        sp.add_argument("--out", type=Path, default=Path("out"))

    sp = sub.add_parser("solve-hitting", help="value iteration for the discounted hitting time")
    common(sp, lam_default=3.0)
    sp.add_argument("--n", type=int, default=hjb_hitting.DEFAULT_N)
    sp.add_argument("--tol", type=float, default=hjb_hitting.DEFAULT_TOL)
    sp.add_argument("--max-iter", type=int, default=hjb_hitting.DEFAULT_MAX_ITER)

    sp = sub.add_parser("solve-horizon", help="fixed-horizon expected-angle surfaces")
    common(sp, lam=False)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--h", type=float, default=hjb_horizon.DEFAULT_H)
    sp.add_argument("--cfl", type=float, default=hjb_horizon.DEFAULT_CFL)
    sp.add_argument("--every", type=int, default=1, help="spatial decimation of the dump")

    sp = sub.add_parser("reach-time", help="expected trajectory reaching time")
    common(sp, lam=False)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--tolT", type=float, default=hjb_horizon.DEFAULT_TOL_T)
    sp.add_argument("--h", type=float, default=hjb_horizon.DEFAULT_H)

    sp = sub.add_parser("simulate", help="dump sample paths")
    common(sp)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--policy", choices=("plus", "minus", "bangbang"), default="bangbang")
    sp.add_argument("--dt", type=float, default=1e-4)
    sp.add_argument("--tmax", type=float, default=5.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ntraj", type=int, default=1)
    sp.add_argument("--absorb", action=argparse.BooleanOptionalAction, default=True)

    sp = sub.add_parser("sweep-omega", help="hitting cost versus control strength")
    sp.add_argument("--omegas", type=_float_list, default=[3, 5, 10, 20, 50, 200])
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.1)
    sp.add_argument("--ntraj", type=int, default=montecarlo.DEFAULT_N_TRAJ)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dt", type=float, default=1e-4)
    sp.add_argument("--n", type=int, default=hjb_hitting.DEFAULT_N)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--out", type=Path, default=Path("out"))

    sp = sub.add_parser("consistency-check", help="polar / Bloch / SME equivalence")
    sp.add_argument("--seed", type=int, default=0, help="first of --nseeds consecutive seeds")
    sp.add_argument("--nseeds", type=int, default=10)
    sp.add_argument("--dt", type=float, default=1e-5)
    sp.add_argument("--tend", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=1e-2)
    sp.add_argument("--omega", type=float, default=10.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--out", type=Path, default=Path("out"))

    sp = sub.add_parser("bounds", help="state preparation time bounds")
    common(sp)
    sp.add_argument("--P", type=float, required=True)
    sp.add_argument("--span", type=float, default=math.pi, help="rotation angle to the target")
    sp.add_argument("--n", type=int, default=hjb_hitting.DEFAULT_N)
    sp.add_argument("--tolT", type=float, default=hjb_horizon.DEFAULT_TOL_T)
    sp.add_argument("--h", type=float, default=hjb_horizon.DEFAULT_H)
    sp.add_argument("--mc-ntraj", type=int, default=0,
                    help="also estimate the undiscounted rotation time by MC")
    sp.add_argument("--mc-tmax", type=float, default=50.0)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("replay", help="re-run a manifest")
    sp.add_argument("manifest", type=Path)
    sp.add_argument("--out", type=Path, required=True)
    return ap


def _args_record(a) -> dict:
    rec = {k: v for k, v in vars(a).items() if k not in ("out", "command", "verbose")}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in rec.items()}


def run_command(command: str, a) -> int:
    run = Run(command, _args_record(a), a.out)
    try:
        status = COMMANDS[command](a, run)
    except UsageError as exc:
        log.error("%s", exc)
        run.warnings.append(str(exc))
        return run.finish(EXIT_USAGE)
    except (hjb_hitting.ConvergenceError, hjb_horizon.BracketError, FloatingPointError,
            ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        run.warnings.append(str(exc))
        return run.finish(EXIT_NUMERIC)
    except ValueError as exc:
        log.error("%s", exc)
        run.warnings.append(str(exc))
        return run.finish(EXIT_USAGE)
    return run.finish(status)


def replay(manifest: Path, out: Path) -> int:
    m = json.loads(Path(manifest).read_text())
    ap = build_parser()
    defaults = vars(ap.parse_args([m["command"]] + _required_stub(m["command"])))
    ns = argparse.Namespace(**{**defaults, **m["args"], "out": out, "command": m["command"]})
    if m["command"] == "sweep-omega":
        ns.omegas = list(ns.omegas)
    return run_command(m["command"], ns)


def _required_stub(command: str) -> list[str]:
    return {"solve-horizon": ["--T", "1"], "bounds": ["--P", "0.9"]}.get(command, [])


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.command == "replay":
        return replay(a.manifest, a.out)
    return run_command(a.command, a)


if __name__ == "__main__":
    sys.exit(main())
