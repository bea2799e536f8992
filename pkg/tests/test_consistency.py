import math

import numpy as np
import pytest

from qhjb.consistency import (
    bloch_path,
    coarsen,
    fine_increments,
    polar_bloch_discrepancy,
    polar_path,
    run_consistency,
    sme_coefficient_error,
)
from qhjb.sde_core import SystemParams

P = SystemParams(1.0, 10.0)


def test_coarsen_preserves_path():
    dw = fine_increments(0, 1000, 1e-4)
    c = coarsen(dw, 4)
    assert c.shape == (250,)
    assert math.fsum(c) == pytest.approx(math.fsum(dw), abs=1e-14)
    assert np.std(dw) == pytest.approx(1e-2, rel=0.1)


def test_noiseless_paths_agree():
    p = SystemParams.gamma_limit(10.0)
    dw = np.zeros((1, 100))
    a = polar_path(0.3, 10.0, dw, 1e-3, p)
    b, worst = bloch_path(0.3, 10.0, dw, 1e-3, p)
    assert np.allclose(a[:, 0], 0.3 + 10.0 * 1e-3 * np.arange(101), atol=1e-12)
    # rotation Euler steps deviate at second order only
    assert np.max(np.abs(a - b)) < 1e-3
    assert worst < 1e-12


def test_discrepancy_shrinks_with_step():
    d1, d2, purity = polar_bloch_discrepancy(range(3), 1e-4, P, t_end=0.2)
    assert d1.shape == (3,)
    assert np.max(d2) < np.max(d1)
    assert np.max(d1) < 5e-2
    assert purity < 1e-12


def test_sme_coefficients():
    for dt in (1e-4, 1e-6):
        e = sme_coefficient_error(P, dt)
        assert e["drift_error"] <= dt
        assert e["diffusion_error"] <= dt


def test_run_consistency_small():
    r = run_consistency(seeds=range(2), dt=1e-4, t_end=0.1)
    assert set(r["checks"]) == {"polar_bloch_within_tol", "discrepancy_decreases",
                                "purity_conserved", "sme_coefficients_match"}
    assert r["passed"] == all(r["checks"].values())
    assert r["checks"]["polar_bloch_within_tol"]
