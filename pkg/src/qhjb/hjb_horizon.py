"""
Fixed-horizon Mayer problems for the expected angle and the expected
trajectory reaching time.

    S^a_{t,T}(y) = sup_v E[ theta(T) | theta(t) = y ]
    S^b_{t,T}(y) = sup_v E[-theta(T) | theta(t) = y ]

are solved backward from their terminal data (+y and -y) with an explicit
monotone upwind scheme on a truncated line [-L, L]. The reaching time is

    R(y) = inf { T : max(S^a_{0,T}(y), S^b_{0,T}(y)) > pi }.

The dynamics do not depend on t, so S_{0,tau}(y) equals the surface of a
longer horizon T read at time level T - tau. One backward sweep at the upper
bracket therefore gives the horizon-tau value for every tau on the time grid,
and the bisection over tau runs on that trace.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .sde_core import SystemParams, diffusion_sq, fmt

log = logging.getLogger(__name__)

DEFAULT_H = 0.02
DEFAULT_CFL = 0.9
DEFAULT_TOL_T = 1e-4
MAX_STORED_ROWS = 200
MAX_DOUBLINGS = 8


class CFLError(ValueError):
    pass


class BracketError(RuntimeError):
    pass


def min_half_width(T: float, params: SystemParams) -> float:
    """pi + drift reach + six diffusion standard deviations."""
    g = params.gamma
    return math.pi + (params.omega + 2.0 * g) * T + 12.0 * math.sqrt(2.0 * g * T)


def max_time_step(h: float, params: SystemParams) -> float:
    return h * h / (8.0 * params.gamma + h * (params.omega + 2.0 * params.gamma))


@dataclass(frozen=True)
class HorizonGrid:
    L: float
    m: int
    h: float
    T: float
    k: float
    steps: int

    def __post_init__(self):
        if self.m < 5 or self.m % 2 == 0:
            raise ValueError("spatial node count must be odd and >= 5")
        if self.T < 0 or self.steps < 0:
            raise ValueError("horizon must be >= 0")

    def check(self, params: SystemParams):
        """Reject grids violating the CFL bound or too narrow for the horizon."""
        kmax = max_time_step(self.h, params)
        if self.k > kmax * (1 + 1e-12):
            raise CFLError(f"time step {self.k:.3e} exceeds CFL limit {kmax:.3e}")
        if self.L < min_half_width(self.T, params) * (1 - 1e-12):
            raise ValueError(f"half-width {self.L} too small for horizon {self.T}")

    @classmethod
    def build(cls, T: float, params: SystemParams, h: float = DEFAULT_H,
              cfl: float = DEFAULT_CFL, width_factor: float = 1.0) -> "HorizonGrid":
        if not 0 < cfl <= 1:
            raise ValueError("cfl fraction must lie in (0, 1]")
        half = int(math.ceil(width_factor * min_half_width(T, params) / h))
        steps = int(math.ceil(T / (cfl * max_time_step(h, params)))) if T > 0 else 0
        k = T / steps if steps else 0.0
        grid = cls(L=half * h, m=2 * half + 1, h=h, T=T, k=k, steps=steps)
        grid.check(params)
        return grid

    @property
    def nodes(self) -> np.ndarray:
        half = (self.m - 1) // 2
        pos = self.h * np.arange(half + 1)
        return np.concatenate([-pos[:0:-1], pos])


@dataclass
class HorizonSolution:
    """Value surface V(t, y) on stored time levels (ascending t), the policy
    surface, and full-resolution traces at the probe angles.

    ``probe_values[p, j]`` is the horizon-(j*k) value at ``probes[p]``.
    """

    grid: HorizonGrid
    params: SystemParams
    sign: float
    times: np.ndarray
    values: np.ndarray
    controls: np.ndarray
    probes: np.ndarray
    probe_values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def value(self, theta0: float) -> float:
        """S_{0,T}(theta0) by linear interpolation."""
        return float(np.interp(theta0, self.nodes, self.values[0]))

    def horizons(self) -> np.ndarray:
        return self.grid.k * np.arange(self.probe_values.shape[1])

    def value_at_horizon(self, tau: float, probe: int = 0) -> float:
        """Horizon-tau value at a probe angle (tau <= T)."""
        if tau > self.grid.T * (1 + 1e-12):
            raise ValueError("horizon beyond the solved range")
        if self.grid.steps == 0:
            return float(self.probe_values[probe, 0])
        return float(np.interp(tau, self.horizons(), self.probe_values[probe]))

    def write_csv(self, path, every: int = 1) -> Path:
        """Surface dump ``t,theta,value,control`` over stored levels."""
        path = Path(path)
        nodes = self.nodes
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "theta", "value", "control"])
            for t, row, ctl in zip(self.times, self.values, self.controls):
                for i in range(0, len(nodes), every):
                    w.writerow([fmt(t), fmt(nodes[i]), fmt(row[i]), fmt(ctl[i])])
        return path


def _probe_weights(probes, nodes, h):
    probes = np.asarray(probes, dtype=float)
    pos = (probes - nodes[0]) / h
    idx = np.clip(np.floor(pos).astype(np.int64), 0, len(nodes) - 2)
    w = pos - idx
    return idx, w


def _solve(sign: float, T: float, params: SystemParams, grid: HorizonGrid | None,
           probes: Sequence[float], h: float, cfl: float) -> HorizonSolution:
    params.require_omega_dominates()
    if grid is None:
        grid = HorizonGrid.build(T, params, h, cfl)
    elif abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise ValueError("grid horizon does not match T")
    grid.check(params)
    nodes = grid.nodes
    hh = grid.h
    th = nodes[1:-1]
    omega = params.omega
    bend = 2.0 * params.gamma * np.sin(2.0 * th)
    b_plus = omega - bend
    b_minus = -omega - bend
    half_s2 = 0.5 * diffusion_sq(th, params)
    bp_pos, bp_neg = np.maximum(b_plus, 0.0), np.maximum(-b_plus, 0.0)
    bm_pos, bm_neg = np.maximum(b_minus, 0.0), np.maximum(-b_minus, 0.0)
    k = grid.k

    V = sign * nodes
    pidx, pw = _probe_weights(probes, nodes, hh)
    trace = np.empty((len(pidx), grid.steps + 1))

    def record(j, V):
        trace[:, j] = (1.0 - pw) * V[pidx] + pw * V[pidx + 1]

    every = max(1, int(math.ceil(grid.steps / MAX_STORED_ROWS)))
    rows, ctl_rows, times = [V.copy()], [np.full(grid.m, math.nan)], [grid.T]
    record(0, V)
    pick_minus = np.zeros(grid.m - 2, dtype=bool)
    grad_positive = True
    for j in range(1, grid.steps + 1):
        dp = (V[2:] - V[1:-1]) / hh
        dm = (V[1:-1] - V[:-2]) / hh
        diff = half_s2 * ((V[2:] - 2.0 * V[1:-1] + V[:-2]) / (hh * hh))
        gen_plus = bp_pos * dp - bp_neg * dm + diff
        gen_minus = bm_pos * dp - bm_neg * dm + diff
        pick_minus = gen_minus > gen_plus
        new = np.empty_like(V)
        new[1:-1] = V[1:-1] + k * np.where(pick_minus, gen_minus, gen_plus)
        # unit-slope lateral condition: keeps the scheme monotone, exact for
        # the linear datum
        new[0] = new[1] - sign * hh
        new[-1] = new[-2] + sign * hh
        if not np.all(np.isfinite(new)):
            raise FloatingPointError(f"non-finite values at step {j}")
        V = new
        record(j, V)
        if sign > 0 and grad_positive and np.any(dp <= 0):
            grad_positive = False
        if j % every == 0 or j == grid.steps:
            ctl = np.empty(grid.m)
            ctl[1:-1] = np.where(pick_minus, -omega, omega)
            ctl[0], ctl[-1] = ctl[1], ctl[-2]
            rows.append(V.copy())
            ctl_rows.append(ctl)
            times.append(grid.T - j * k)
    if grid.steps:
        times[-1] = 0.0
    diag = {"stored_every": every}
    if sign > 0:
        diag["gradient_positive"] = grad_positive
        diag["policy_constant_plus"] = bool(not np.any(pick_minus)) if grid.steps else True
        if grad_positive and not diag["policy_constant_plus"]:
            log.info("positive gradient but policy not identically +omega")
    return HorizonSolution(
        grid=grid, params=params, sign=sign,
        times=np.array(times[::-1]), values=np.array(rows[::-1]),
        controls=np.array(ctl_rows[::-1]), probes=np.asarray(probes, dtype=float),
        probe_values=trace, diagnostics=diag,
    )


def solve_sa(T: float, params: SystemParams, grid: HorizonGrid | None = None,
             probes: Sequence[float] = (0.0,), h: float = DEFAULT_H,
             cfl: float = DEFAULT_CFL) -> HorizonSolution:
    """Backward sweep for sup E[theta(T)]; terminal datum V(T, y) = y."""
    return _solve(1.0, T, params, grid, probes, h, cfl)


def solve_sb(T: float, params: SystemParams, grid: HorizonGrid | None = None,
             probes: Sequence[float] = (0.0,), h: float = DEFAULT_H,
             cfl: float = DEFAULT_CFL) -> HorizonSolution:
    """Backward sweep for sup E[-theta(T)]; terminal datum V(T, y) = -y."""
    return _solve(-1.0, T, params, grid, probes, h, cfl)


def expected_final_angle(theta0: float, T: float, params: SystemParams,
                         h: float = DEFAULT_H, cfl: float = DEFAULT_CFL) -> float:
    """sup over policies of |E[theta(T)]| from theta0."""
    sa = solve_sa(T, params, probes=(theta0,), h=h, cfl=cfl)
    sb = solve_sb(T, params, grid=sa.grid, probes=(theta0,))
    return max(sa.value(theta0), sb.value(theta0))


@dataclass
class ReachingTime:
    theta0: float
    R: float
    tol_T: float
    brackets: list
    T_hi: float
    h: float
    k: float

    def to_dict(self) -> dict:
        return {"theta0": self.theta0, "R": self.R, "tol_T": self.tol_T,
                "brackets": self.brackets, "T_hi": self.T_hi, "h": self.h, "k": self.k}


def reaching_time(theta0: float, params: SystemParams, tol_T: float = DEFAULT_TOL_T,
                  h: float = DEFAULT_H, cfl: float = DEFAULT_CFL,
                  full: bool = False):
    """Smallest horizon at which sup |E[theta(T)]| from theta0 exceeds pi.

    The bracket starts at 2 pi / (omega - 2 gamma) and doubles until the
    crossing is enclosed; bisection then halves it down to tol_T.
    """
    params.require_omega_dominates()
    if abs(theta0) >= math.pi:
        res = ReachingTime(theta0, 0.0, tol_T, [], 0.0, h, 0.0)
        return res if full else 0.0
    T_hi = 2.0 * math.pi / (params.omega - 2.0 * params.gamma)
    for _ in range(MAX_DOUBLINGS + 1):
        sa = solve_sa(T_hi, params, probes=(theta0,), h=h, cfl=cfl)
        sb = solve_sb(T_hi, params, grid=sa.grid, probes=(theta0,))
        trace = np.maximum(sa.probe_values[0], sb.probe_values[0])
        if trace[-1] > math.pi:
            break
        T_hi *= 2.0
    else:
        raise BracketError(f"no crossing of pi below horizon {T_hi}")
    horizons = sa.horizons()

    def f(tau):
        return float(np.interp(tau, horizons, trace))

    lo, hi = 0.0, T_hi
    brackets = [(lo, hi)]
    while hi - lo > tol_T:
        mid = 0.5 * (lo + hi)
        if f(mid) > math.pi:
            hi = mid
        else:
            lo = mid
        brackets.append((lo, hi))
    res = ReachingTime(theta0, 0.5 * (lo + hi), tol_T, brackets, T_hi, h, sa.grid.k)
    return res if full else res.R
