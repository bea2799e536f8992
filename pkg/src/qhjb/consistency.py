"""Cross-checks between the polar SDE, the Bloch SDE and the density-matrix SME."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .sde_core import (
    MEASUREMENT_SIGN,
    TOL_PURITY,
    SystemParams,
    bloch_coefficients,
    bloch_from_density,
    density_from_bloch,
    sme_density_step,
    trajectory_rng,
)

DEFAULT_SEEDS = tuple(range(10))


def fine_increments(seed: int, n_fine: int, dt_fine: float) -> np.ndarray:
    return trajectory_rng(seed, 0).standard_normal(n_fine) * math.sqrt(dt_fine)


def coarsen(dw: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of increments (same Brownian path, coarser grid)."""
    return dw.reshape(-1, factor).sum(axis=1)


def polar_path(theta0, v, dw, dt, params: SystemParams) -> np.ndarray:
    """Unwrapped Euler-Maruyama path driven by the given increments (rows = paths)."""
    dw = np.atleast_2d(dw)
    th = np.full(dw.shape[0], float(theta0))
    out = np.empty((dw.shape[1] + 1, dw.shape[0]))
    out[0] = th
    g2 = 2.0 * params.gamma
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    for j in range(dw.shape[1]):
        th = th + (v - g2 * np.sin(2.0 * th)) * dt + c * np.sin(th) * dw[:, j]
        out[j + 1] = th
    return out


def bloch_path(theta0, v, dw, dt, params: SystemParams):
    """Renormalized Bloch Euler path driven by MEASUREMENT_SIGN * dw. Returns the
    unwrapped angle atan2(x, z) and the largest |x^2 + z^2 - 1| along the path."""
    dw = np.atleast_2d(dw) * MEASUREMENT_SIGN
    x = np.full(dw.shape[0], math.sin(theta0))
    z = np.full(dw.shape[0], math.cos(theta0))
    ang = np.empty((dw.shape[1] + 1, dw.shape[0]))
    ang[0] = np.arctan2(x, z)
    worst = 0.0
    for j in range(dw.shape[1]):
        ax, az, bx, bz = bloch_coefficients(x, z, v, params)
        x, z = x + ax * dt + bx * dw[:, j], z + az * dt + bz * dw[:, j]
        r = np.hypot(x, z)
        x, z = x / r, z / r
        worst = max(worst, float(np.max(np.abs(x * x + z * z - 1.0))))
        ang[j + 1] = np.arctan2(x, z)
    return np.unwrap(ang, axis=0), worst


def polar_bloch_discrepancy(seeds: Sequence[int], dt: float, params: SystemParams,
                            v: float | None = None, t_end: float = 0.5,
                            theta0: float = 0.0, refine: int = 2):
    """Max |theta_polar - theta_Bloch| over [0, t_end] at step dt and dt/refine,
    both driven by one Brownian path per seed.

    Returns (per-seed discrepancy at dt, per-seed at dt/refine, purity deviation).
    """
    v = params.omega if v is None else v
    n = int(round(t_end / dt))
    fine = np.array([fine_increments(s, n * refine, dt / refine) for s in seeds])
    coarse = np.array([coarsen(f, refine) for f in fine])
    res = []
    purity = 0.0
    for dw, step in ((coarse, dt), (fine, dt / refine)):
        p = polar_path(theta0, v, dw, step, params)
        b, worst = bloch_path(theta0, v, dw, step, params)
        purity = max(purity, worst)
        res.append(np.max(np.abs(p - b), axis=0))
    return res[0], res[1], purity


def sme_coefficient_error(params: SystemParams, dt: float, n_states: int = 16,
                          seed: int = 12345, v: float | None = None) -> dict:
    """Compare Bloch drift/innovation coefficients with finite differences of
    one SME step from random pure states. Returns max abs errors."""
    v = params.omega if v is None else v
    rng = np.random.default_rng(seed)
    drift_err = 0.0
    diff_err = 0.0
    for th in rng.uniform(-math.pi, math.pi, n_states):
        x0, z0 = math.sin(th), math.cos(th)
        rho = density_from_bloch(x0, z0)
        ax, az, bx, bz = bloch_coefficients(x0, z0, v, params)
        x1, z1 = bloch_from_density(sme_density_step(rho, v, dt, 0.0, params))
        drift_err = max(drift_err, abs((x1 - x0) / dt - ax), abs((z1 - z0) / dt - az))
        dw = math.sqrt(dt)
        x2, z2 = bloch_from_density(sme_density_step(rho, v, dt, dw, params))
        # remove the drift part, then divide by the increment
        diff_err = max(diff_err, abs((x2 - x1) / dw - bx), abs((z2 - z1) / dw - bz))
    return {"dt": dt, "drift_error": drift_err, "diffusion_error": diff_err}


def run_consistency(seeds: Sequence[int] = DEFAULT_SEEDS, dt: float = 1e-5,
                    params: SystemParams | None = None, t_end: float = 0.5,
                    tol: float = 1e-2) -> dict:
    """The full equivalence suite; ``passed`` is the conjunction of all checks."""
    params = params or SystemParams(gamma=1.0, omega=10.0)
    d_coarse, d_fine, purity = polar_bloch_discrepancy(seeds, dt, params, t_end=t_end)
    sme = [sme_coefficient_error(params, h) for h in (1e-4, 1e-6)]
    checks = {
        "polar_bloch_within_tol": bool(np.max(d_coarse) < tol),
        # seed-wise ratios fluctuate; the worst case over seeds must improve
        "discrepancy_decreases": bool(np.max(d_fine) < np.max(d_coarse)),
        "purity_conserved": bool(purity <= TOL_PURITY),
        "sme_coefficients_match": all(
            max(s["drift_error"], s["diffusion_error"]) <= s["dt"] for s in sme
        ),
    }
    return {
        "seeds": list(seeds),
        "dt": dt,
        "t_end": t_end,
        "tol": tol,
        "params": params.to_dict(),
        "discrepancy_dt": d_coarse.tolist(),
        "discrepancy_dt_half": d_fine.tolist(),
        "max_discrepancy_dt": float(np.max(d_coarse)),
        "max_discrepancy_dt_half": float(np.max(d_fine)),
        "purity_deviation": purity,
        "sme": sme,
        "checks": checks,
        "passed": all(checks.values()),
    }
