"""
Purification-time formulas and the composite state-preparation time bounds.

    tau_wr(P)    = sqrt(2P-1) * atanh(sqrt(2P-1)) / (8 gamma)
    t_jacobs(P)  = -ln(2 - 2P) / (8 gamma)

Written with argument (2P - 2) the logarithm is undefined for every admissible
purity; the magnitude 2 - 2P is used here and every result carries
``sign_correction_applied``.

Note that t_jacobs > tau_wr on the whole open interval (1/2, 1): with
u = 2P - 1 the series are u + u^2/2 + u^3/3 + ... against u + u^2/3 + u^3/5 + ...
Consequently t_LB > t_UB for every purity; ``PreparationBounds.ordered`` reports
this instead of raising.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

from . import hjb_hitting, hjb_horizon
from .sde_core import SystemParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PurityTarget:
    """Target purity P in (1/2, 1) and the rotation span (radians) from the
    measurement eigenstate to the target direction; pi is the worst case."""

    P: float
    theta_target: float = math.pi

    def __post_init__(self):
        if not 0.5 < self.P < 1.0:
            raise ValueError(f"purity must lie in (1/2, 1), got {self.P}")
        if not 0.0 <= self.theta_target <= math.pi:
            raise ValueError("rotation span must lie in [0, pi]")


def tau_wr(P: float, gamma: float) -> float:
    if not 0.5 <= P < 1.0:
        raise ValueError(f"tau_wr needs 1/2 <= P < 1, got {P}")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    s = math.sqrt(2.0 * P - 1.0)
    return s * math.atanh(s) / (8.0 * gamma)


def t_jacobs(P: float, gamma: float) -> float:
    # P = 1/2 is admitted (zero time), matching tau_wr
    if not 0.5 <= P < 1.0:
        raise ValueError(f"t_jacobs needs 1/2 <= P < 1, got {P}")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    return -math.log1p(1.0 - 2.0 * P) / (8.0 * gamma)


def default_hitting_solver(theta0: float, params: SystemParams,
                           n: int = hjb_hitting.DEFAULT_N,
                           tol: float = hjb_hitting.DEFAULT_TOL) -> float:
    if abs(theta0) >= math.pi:
        return 0.0
    sol = hjb_hitting.value_iteration(hjb_hitting.Grid(n), params, tol)
    return sol.value_at(theta0)


def default_horizon_solver(theta0: float, params: SystemParams,
                           tol_T: float = hjb_horizon.DEFAULT_TOL_T,
                           h: float = hjb_horizon.DEFAULT_H) -> float:
    return hjb_horizon.reaching_time(theta0, params, tol_T=tol_T, h=h)


@dataclass
class PreparationBounds:
    P: float
    gamma: float
    theta_target: float
    tau_wr: float
    t_jacobs: float
    tau_r: float
    t_r: float
    tau_UB: float
    t_LB: float
    t_UB: float
    ordered: bool
    mc_rotation_time: Optional[float] = None
    mc_rotation_stderr: Optional[float] = None
    sign_correction_applied: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def preparation_bounds(target: PurityTarget, params: SystemParams,
                       hitting_solver: Callable[[float, SystemParams], float] = default_hitting_solver,
                       horizon_solver: Callable[[float, SystemParams], float] = default_horizon_solver,
                       mc_rotation: Optional[Callable[[float, SystemParams], tuple]] = None
                       ) -> PreparationBounds:
    """Compose purification times with the rotation costs from the solvers.

    The rotation starts at angle pi - theta_target and ends at +/-pi, so the
    default span pi starts from the measurement eigenstate at 0. ``mc_rotation``
    may supply an undiscounted (mean, stderr) rotation time for reference.
    """
    params.require_omega_dominates()
    start = math.pi - target.theta_target
    wr = tau_wr(target.P, params.gamma)
    tj = t_jacobs(target.P, params.gamma)
    tau_r = hitting_solver(start, params)
    t_r = horizon_solver(start, params)
    t_lb = tj + t_r
    t_ub = wr + t_r
    ordered = t_lb <= t_ub
    if not ordered:
        log.warning("t_LB = %.6g exceeds t_UB = %.6g (t_jacobs > tau_wr at P = %g)",
                    t_lb, t_ub, target.P)
    out = PreparationBounds(
        P=target.P, gamma=params.gamma, theta_target=target.theta_target,
        tau_wr=wr, t_jacobs=tj, tau_r=tau_r, t_r=t_r,
        tau_UB=wr + tau_r, t_LB=t_lb, t_UB=t_ub, ordered=ordered,
    )
    if mc_rotation is not None:
        out.mc_rotation_time, out.mc_rotation_stderr = mc_rotation(start, params)
    return out
