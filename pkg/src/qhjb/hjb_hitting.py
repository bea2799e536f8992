"""
Discounted mean hitting time to theta = +/-pi by Markov chain approximation.

The controlled diffusion is replaced by a nearest-neighbour chain on a uniform
grid (upwind in the drift, central in the diffusion); value iteration on the
chain converges to the viscosity solution of

    sup_v { -1 + lam*phi - b(y, v) phi' - 0.5 sigma(y)^2 phi'' } = 0,  phi(+/-pi) = 0.

The Hamiltonian is affine in v, so the optimum over [-omega, omega] is always
attained at an endpoint and only v = +/-omega is searched.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sde_core import SystemParams, diffusion_sq, drift, fmt

log = logging.getLogger(__name__)

DEFAULT_N = 401
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000_000


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class Grid:
    """n nodes from center - pi to center + pi inclusive (n odd, center a node)."""

    n: int
    center: float = 0.0

    def __post_init__(self):
        if self.n < 5 or self.n % 2 == 0:
            raise ValueError(f"grid size must be odd and >= 5, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * math.pi / (self.n - 1)

    @property
    def mid(self) -> int:
        return (self.n - 1) // 2

    @property
    def nodes(self) -> np.ndarray:
        # Built outward from the center so that the grid is exactly mirror
        # symmetric; the ends are exactly center -/+ pi.
        half = self.h * np.arange(self.mid + 1)
        half[-1] = math.pi
        offs = np.concatenate([-half[:0:-1], half])
        return self.center + offs

    @property
    def lo(self) -> float:
        return self.center - math.pi

    @property
    def hi(self) -> float:
        return self.center + math.pi


@dataclass(frozen=True)
class TransitionStencil:
    p_up: float
    p_down: float
    dt_local: float


def transition_probabilities(theta, v, h, params: SystemParams):
    b = drift(theta, v, params)
    s2 = diffusion_sq(theta, params)
    q = s2 + h * np.abs(b)
    if np.any(q <= 0):
        raise ValueError("degenerate transition: zero drift at a zero-diffusion node")
    p_up = (0.5 * s2 + h * np.maximum(b, 0.0)) / q
    p_down = (0.5 * s2 + h * np.maximum(-b, 0.0)) / q
    return p_up, p_down, h * h / q


def mca_transition(i: int, v: float, grid: Grid, params: SystemParams) -> TransitionStencil:
    if not 0 < i < grid.n - 1:
        raise IndexError("transitions are defined on interior nodes only")
    pu, pd, dt = transition_probabilities(grid.nodes[i], v, grid.h, params)
    return TransitionStencil(float(pu), float(pd), float(dt))


def _step_cost(dt, lam):
    if lam == 0:
        return dt
    return -np.expm1(-lam * dt) / lam


class _Operator:
    """Precomputed chain coefficients for v = +omega (row 0) and -omega (row 1)."""

    def __init__(self, grid: Grid, params: SystemParams):
        th = grid.nodes[1:-1]
        self.controls = np.array([params.omega, -params.omega])
        cost, up, down, dts = [], [], [], []
        for v in self.controls:
            pu, pd, dt = transition_probabilities(th, v, grid.h, params)
            disc = np.exp(-params.lam * dt)
            cost.append(_step_cost(dt, params.lam))
            up.append(disc * pu)
            down.append(disc * pd)
            dts.append(dt)
        self.cost = np.array(cost)
        self.up = np.array(up)
        self.down = np.array(down)
        self.dt = np.array(dts)

    def apply(self, V):
        # grouping keeps the update exactly mirror symmetric
        cand = self.cost + (self.up * V[2:] + self.down * V[:-2])
        # ties resolved toward +omega (row 0)
        pick_minus = cand[1] < cand[0]
        return np.where(pick_minus, cand[1], cand[0]), pick_minus, cand


def bellman_update(V, grid: Grid, params: SystemParams, _op: _Operator | None = None):
    """One Jacobi sweep. Returns (new values, policy); boundary values stay 0."""
    V = np.asarray(V, dtype=float)
    if V[0] != 0.0 or V[-1] != 0.0:
        raise ValueError("value function must vanish at the target")
    op = _op or _Operator(grid, params)
    inner, pick_minus, _ = op.apply(V)
    out = np.zeros_like(V)
    out[1:-1] = inner
    pol = np.zeros_like(V)
    pol[1:-1] = np.where(pick_minus, -params.omega, params.omega)
    pol[0], pol[-1] = pol[1], pol[-2]
    return out, pol


@dataclass
class HittingSolution:
    grid: Grid
    params: SystemParams
    values: np.ndarray
    controls: np.ndarray
    iterations: int
    residual_history: list = field(repr=False)
    tol: float = DEFAULT_TOL
    ties: list = field(default_factory=list)
    experimental: bool = False

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    def value_at(self, theta: float) -> float:
        return float(np.interp(theta, self.nodes, self.values))

    def metadata(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "n": self.grid.n,
            "center": self.grid.center,
            "tol": self.tol,
            "iterations": self.iterations,
            "residual": self.residual,
            "hjb_residual": hjb_residual(self.values, self.controls, self.grid, self.params),
            "ties_at": self.ties,
            "experimental": self.experimental,
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["theta", "value", "control"])
            for row in zip(self.nodes, self.values, self.controls):
                w.writerow([fmt(x) for x in row])
        return path


def value_iteration(
    grid: Grid,
    params: SystemParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    raise_on_failure: bool = True,
) -> HittingSolution:
    """Iterate the Bellman map from V = 0 until the sup-norm change drops below tol."""
    params.require_omega_dominates()
    experimental = params.lam == 0
    if experimental:
        log.warning("lambda = 0: undiscounted problem, no uniqueness guarantee")
    op = _Operator(grid, params)
    V = np.zeros(grid.n)
    history = []
    it = 0
    pick_minus = np.zeros(grid.n - 2, dtype=bool)
    cand = None
    while it < max_iter:
        inner, pick_minus, cand = op.apply(V)
        r = float(np.max(np.abs(inner - V[1:-1])))
        V[1:-1] = inner
        history.append(r)
        it += 1
        if r < tol:
            break
    controls = np.zeros(grid.n)
    controls[1:-1] = np.where(pick_minus, -params.omega, params.omega)
    controls[0], controls[-1] = controls[1], controls[-2]
    ties = [float(grid.nodes[i + 1]) for i in np.nonzero(cand[0] == cand[1])[0]]
    sol = HittingSolution(grid, params, V, controls, it, history, tol, ties, experimental)
    if history[-1] >= tol:
        msg = f"value iteration did not converge in {max_iter} sweeps (residual {history[-1]:.3e})"
        if raise_on_failure:
            raise ConvergenceError(msg, history[-1])
        log.warning(msg)
    return sol


def hjb_residual(V, controls, grid: Grid, params: SystemParams) -> float:
    """max |-1 + lam V - b D_upwind V - 0.5 sigma^2 D2 V| over interior nodes."""
    V = np.asarray(V, dtype=float)
    th = grid.nodes[1:-1]
    h = grid.h
    v = np.asarray(controls, dtype=float)[1:-1]
    b = drift(th, v, params)
    s2 = diffusion_sq(th, params)
    dplus = (V[2:] - V[1:-1]) / h
    dminus = (V[1:-1] - V[:-2]) / h
    d1 = np.where(b >= 0, dplus, dminus)
    d2 = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / (h * h)
    return float(np.max(np.abs(-1.0 + params.lam * V[1:-1] - b * d1 - 0.5 * s2 * d2)))


def center_slopes(values, grid: Grid) -> tuple[float, float]:
    """One-sided difference quotients (left, right) at the center node."""
    m, h = grid.mid, grid.h
    return (values[m] - values[m - 1]) / h, (values[m + 1] - values[m]) / h


def solve(omega: float, gamma: float, lam: float, n: int = DEFAULT_N, tol: float = DEFAULT_TOL,
          center: float = 0.0, max_iter: int = DEFAULT_MAX_ITER) -> HittingSolution:
    return value_iteration(Grid(n, center), SystemParams(gamma, omega, lam), tol, max_iter)
