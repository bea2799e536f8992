"""
Ensemble estimators: discounted hitting times, expected-angle curves, the
control-strength sweep and the alternate start/target comparison.

Trajectories are split into fixed-size chunks that are simulated in lockstep
with numpy. Each trajectory draws from its own counter-based stream, and the
chunk layout does not depend on the thread count, so results are bit-identical
for any QHJB_THREADS setting. Reductions use math.fsum.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import hjb_hitting
from .sde_core import (
    GridPolicy,
    NoiseStreams,
    Policy,
    SystemParams,
    as_policy,
    check_control,
    discounted_cost_array,
)

log = logging.getLogger(__name__)

CHUNK = 512
DEFAULT_N_TRAJ = 5000


def thread_count() -> int:
    raw = os.environ.get("QHJB_THREADS")
    if raw:
        return max(1, int(raw))
    return min(4, os.cpu_count() or 1)


@dataclass
class EnsembleConfig:
    """dt defaults to 1e-4/gamma, t_max to 50/lambda (discounted runs)."""

    n_traj: int = DEFAULT_N_TRAJ
    dt: Optional[float] = None
    t_max: Optional[float] = None
    master_seed: int = 0
    policy: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")

    def resolve_dt(self, params: SystemParams) -> float:
        if self.dt is not None:
            return self.dt
        return 1e-4 / params.gamma if params.gamma > 0 else 1e-4

    def resolve_t_max(self, params: SystemParams) -> float:
        if self.t_max is not None:
            return self.t_max
        if params.lam > 0:
            return 50.0 / params.lam
        raise ValueError("t_max is required when lambda = 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnsembleStats:
    mean: float
    std_error: float
    n_censored: int
    n_traj: int
    config: dict = field(default_factory=dict)
    censored_warning: bool = False

    def to_dict(self):
        return asdict(self)


def _chunks(n: int):
    return [range(s, min(n, s + CHUNK)) for s in range(0, n, CHUNK)]


def _run_chunks(fn, n: int):
    chunks = _chunks(n)
    threads = thread_count()
    if threads == 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, chunks))
    return np.concatenate(parts)


def _first_passage_chunk(indices, theta0, policy: Policy, params, dt, t_max, seed, lo, hi):
    n = len(indices)
    tau = np.full(n, np.nan)
    if theta0 <= lo or theta0 >= hi:
        tau[:] = 0.0
        return tau
    noise = NoiseStreams(seed, list(indices))
    pos = np.arange(n)
    th = np.full(n, float(theta0))
    g2 = 2.0 * params.gamma
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    sq = math.sqrt(dt)
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    for j in range(n_steps):
        v = policy(th)
        check_control(v, params)
        dw = noise.next(pos) * sq
        new = th + (v - g2 * np.sin(2.0 * th)) * dt + c * np.sin(th) * dw
        up = new >= hi
        down = new <= lo
        out = up | down
        if out.any():
            level = np.where(up[out], hi, lo)
            frac = (level - th[out]) / (new[out] - th[out])
            tau[pos[out]] = (j + frac) * dt
            keep = ~out
            pos, new = pos[keep], new[keep]
            if len(pos) == 0:
                break
        th = new
    return tau


def hitting_times(theta0: float, policy, cfg: EnsembleConfig, params: SystemParams,
                  lo: float = -math.pi, hi: float = math.pi) -> np.ndarray:
    """First exit times from (lo, hi) for every trajectory; NaN if censored."""
    pol = as_policy(policy)
    dt = cfg.resolve_dt(params)
    t_max = cfg.resolve_t_max(params)

    def run(idx):
        return _first_passage_chunk(idx, theta0, pol, params, dt, t_max,
                                    cfg.master_seed, lo, hi)

    return _run_chunks(run, cfg.n_traj)


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def summarize_costs(tau: np.ndarray, lam: float, cfg: EnsembleConfig) -> EnsembleStats:
    n_cens = int(np.count_nonzero(np.isnan(tau)))
    warn = False
    if lam > 0:
        costs = discounted_cost_array(tau, lam)
    else:
        costs = tau[~np.isnan(tau)]
        if n_cens:
            warn = True
            log.warning("%d of %d paths censored; undiscounted mean is a lower estimate",
                        n_cens, len(tau))
    if n_cens == len(tau):
        log.warning("all %d paths censored", len(tau))
        warn = True
    if len(costs) == 0:
        return EnsembleStats(math.nan, math.nan, n_cens, len(tau), cfg.to_dict(), True)
    mean, se = _mean_stderr(costs)
    return EnsembleStats(mean, se, n_cens, len(tau), cfg.to_dict(), warn)


def estimate_discounted_hitting(theta0: float, policy, cfg: EnsembleConfig,
                                params: SystemParams, lo: float = -math.pi,
                                hi: float = math.pi) -> EnsembleStats:
    """Mean and standard error of the discounted hitting cost; censored paths
    contribute 1/lambda."""
    if not params.lam > 0:
        raise ValueError("discounted estimate needs lambda > 0")
    tau = hitting_times(theta0, policy, cfg, params, lo, hi)
    return summarize_costs(tau, params.lam, cfg)


def estimate_hitting_time(theta0: float, policy, cfg: EnsembleConfig,
                          params: SystemParams) -> EnsembleStats:
    """Undiscounted mean first passage time (censored paths reported separately)."""
    tau = hitting_times(theta0, policy, cfg, params)
    return summarize_costs(tau, 0.0, cfg)


@dataclass
class ExpectedTrajectory:
    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    crossing: Optional[float]
    n_traj: int


def _angle_chunk(indices, theta0, policy: Policy, params, dt, sample_steps, seed):
    n = len(indices)
    noise = NoiseStreams(seed, list(indices))
    pos = np.arange(n)
    th = np.full(n, float(theta0))
    g2 = 2.0 * params.gamma
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    sq = math.sqrt(dt)
    out = np.empty((len(sample_steps), n))
    k = 0
    for j in range(sample_steps[-1] + 1):
        while k < len(sample_steps) and sample_steps[k] == j:
            out[k] = th
            k += 1
        if j == sample_steps[-1]:
            break
        v = policy(th)
        check_control(v, params)
        dw = noise.next(pos) * sq
        th = th + (v - g2 * np.sin(2.0 * th)) * dt + c * np.sin(th) * dw
    return out.T


def first_crossing(times, values, level: float = math.pi) -> Optional[float]:
    """First time |values| reaches level, interpolated between samples."""
    a = np.abs(np.asarray(values))
    hit = np.nonzero(a >= level)[0]
    if len(hit) == 0:
        return None
    j = hit[0]
    if j == 0:
        return float(times[0])
    return float(times[j - 1] + (times[j] - times[j - 1]) * (level - a[j - 1]) / (a[j] - a[j - 1]))


def estimate_expected_trajectory(theta0: float, policy, cfg: EnsembleConfig,
                                 params: SystemParams,
                                 sample_times: Sequence[float]) -> ExpectedTrajectory:
    """Pathwise mean of the unwrapped angle at the sample times, with the first
    crossing of |mean| = pi."""
    pol = as_policy(policy)
    dt = cfg.resolve_dt(params)
    times = np.asarray(sample_times, dtype=float)
    steps = np.rint(times / dt).astype(np.int64)
    if np.any(np.diff(steps) < 0) or steps[0] < 0:
        raise ValueError("sample times must be nondecreasing and >= 0")

    def run(idx):
        return _angle_chunk(idx, theta0, pol, params, dt, steps, cfg.master_seed)

    paths = _run_chunks(run, cfg.n_traj)
    means = np.empty(len(times))
    ses = np.empty(len(times))
    for i in range(len(times)):
        means[i], ses[i] = _mean_stderr(paths[:, i])
    t_actual = steps * dt
    return ExpectedTrajectory(t_actual, means, ses, first_crossing(t_actual, means),
                              cfg.n_traj)


def hamiltonian_time(omega: float, span: float = math.pi) -> float:
    """Hitting time of the unmeasured rotation at full strength."""
    return span / omega


def discounted_hamiltonian_time(omega: float, lam: float, span: float = math.pi) -> float:
    return -math.expm1(-lam * span / omega) / lam


@dataclass
class SweepRow:
    omega: float
    mc_mean: float = math.nan
    mc_stderr: float = math.nan
    pde_value: float = math.nan
    disc_hamiltonian: float = math.nan
    hamiltonian: float = math.nan
    n_censored: int = 0
    error: Optional[str] = None


SWEEP_COLUMNS = ("omega", "mc_mean", "mc_stderr", "pde_value", "disc_hamiltonian",
                 "hamiltonian", "n_censored")


def omega_sweep(omegas: Sequence[float], theta0: float, cfg: EnsembleConfig,
                gamma: float, lam: float, n_grid: int = hjb_hitting.DEFAULT_N,
                tol: float = hjb_hitting.DEFAULT_TOL) -> list[SweepRow]:
    """One row per control strength: MC estimate under the value-iteration policy,
    the value-iteration cost at theta0 and the two unmeasured-rotation lines."""
    rows = []
    for om in omegas:
        row = SweepRow(float(om))
        try:
            params = SystemParams(gamma, om, lam)
            params.require_omega_dominates()
            row.hamiltonian = hamiltonian_time(om)
            row.disc_hamiltonian = discounted_hamiltonian_time(om, lam)
            sol = hjb_hitting.value_iteration(hjb_hitting.Grid(n_grid), params, tol)
            row.pde_value = sol.value_at(theta0)
            stats = estimate_discounted_hitting(
                theta0, GridPolicy(sol.nodes, sol.controls), cfg, params)
            row.mc_mean, row.mc_stderr, row.n_censored = stats.mean, stats.std_error, stats.n_censored
        except Exception as exc:  # noqa: BLE001 - a failing row must not stop the sweep
            log.warning("sweep row omega=%s failed: %s", om, exc)
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def target_interval(start: float, target: float) -> tuple[float, float]:
    """Absorbing interval around start bounded by the nearest images of target."""
    hi = target + 2.0 * math.pi * math.ceil((start - target) / (2.0 * math.pi))
    if hi == start:
        return start, start
    return hi - 2.0 * math.pi, hi


@dataclass
class TargetRecord:
    start: float
    target: float
    lo: float
    hi: float
    pde_value: float
    mc: Optional[EnsembleStats]


def target_hitting(start: float, target: float, cfg: EnsembleConfig, params: SystemParams,
                   n_grid: int = hjb_hitting.DEFAULT_N) -> TargetRecord:
    """Discounted hitting cost from start to the target angle (either direction)."""
    lo, hi = target_interval(start, target)
    if lo == hi:
        return TargetRecord(start, target, lo, hi, 0.0,
                            EnsembleStats(0.0, 0.0, 0, cfg.n_traj, cfg.to_dict()))
    if hi - lo != 2.0 * math.pi or not math.isclose(start, 0.5 * (lo + hi)):
        # value iteration grid is centered on start; only antipodal targets
        raise ValueError("start and target must be antipodal")
    sol = hjb_hitting.value_iteration(hjb_hitting.Grid(n_grid, center=start), params)
    stats = estimate_discounted_hitting(start, GridPolicy(sol.nodes, sol.controls), cfg,
                                        params, lo, hi)
    return TargetRecord(start, target, lo, hi, sol.value_at(start), stats)


@dataclass
class TargetComparison:
    x_pair: TargetRecord
    z_pair: TargetRecord

    @property
    def x_faster(self) -> bool:
        return self.x_pair.mc.mean < self.z_pair.mc.mean


def alternate_targets_experiment(cfg: EnsembleConfig, params: SystemParams,
                                 n_grid: int = hjb_hitting.DEFAULT_N,
                                 x_pair=(math.pi / 2, -math.pi / 2),
                                 z_pair=(0.0, math.pi)) -> TargetComparison:
    """+x -> -x versus +z -> -z discounted hitting costs."""
    return TargetComparison(
        target_hitting(*x_pair, cfg, params, n_grid),
        target_hitting(*z_pair, cfg, params, n_grid),
    )
