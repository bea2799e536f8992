import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhjb.hjb_horizon import (
    CFLError,
    HorizonGrid,
    expected_final_angle,
    max_time_step,
    min_half_width,
    reaching_time,
    solve_sa,
    solve_sb,
)
from qhjb.sde_core import SystemParams

P = SystemParams(gamma=1.0, omega=10.0)
T = 0.2


@pytest.fixture(scope="module")
def pair():
    probes = (-1.0, 0.0, 0.5, 2.0)
    sa = solve_sa(T, P, probes=probes)
    sb = solve_sb(T, P, grid=sa.grid, probes=probes)
    return sa, sb


def test_grid_geometry():
    assert min_half_width(0.0, P) == math.pi
    assert max_time_step(0.1, P) == pytest.approx(0.01 / (8 + 1.2))
    g = HorizonGrid.build(T, P)
    assert g.L >= min_half_width(T, P)
    assert g.k <= 0.9 * max_time_step(g.h, P) * (1 + 1e-12)
    assert g.steps * g.k == pytest.approx(T)
    nodes = g.nodes
    assert len(nodes) == g.m and nodes[(g.m - 1) // 2] == 0.0
    assert np.array_equal(nodes, -nodes[::-1])


def test_grid_rejections():
    g = HorizonGrid.build(T, P)
    bad_k = HorizonGrid(g.L, g.m, g.h, g.T, 2 * max_time_step(g.h, P), g.steps)
    with pytest.raises(CFLError):
        bad_k.check(P)
    narrow = HorizonGrid(1.0, 51, g.h, g.T, g.k, g.steps)
    with pytest.raises(ValueError):
        narrow.check(P)
    with pytest.raises(ValueError):
        HorizonGrid.build(T, P, cfl=1.5)
    with pytest.raises(ValueError):
        solve_sa(T, P, grid=HorizonGrid.build(0.1, P))


def test_zero_horizon_is_terminal_datum():
    sa = solve_sa(0.0, P, probes=(0.3,))
    assert np.array_equal(sa.initial, sa.nodes)
    assert sa.value_at_horizon(0.0) == pytest.approx(0.3)
    sb = solve_sb(0.0, P)
    assert np.array_equal(sb.initial, -sb.nodes)


def test_noiseless_exact():
    p = SystemParams.gamma_limit(10.0)
    sa = solve_sa(T, p, probes=(0.0, 1.0))
    # pure transport of a linear datum at speed omega
    assert np.max(np.abs(sa.initial - (sa.nodes + 10.0 * T))) < 1e-12
    assert sa.value_at_horizon(0.1, probe=1) == pytest.approx(2.0, abs=1e-12)


def test_sandwich(pair):
    sa, _ = pair
    y = sa.nodes
    lo = y + (P.omega - 2 * P.gamma) * T
    hi = y + (P.omega + 2 * P.gamma) * T
    assert np.all(sa.initial >= lo - 1e-12)
    assert np.all(sa.initial <= hi + 1e-12)


def test_mirror_identity(pair):
    sa, sb = pair
    assert np.max(np.abs(sb.initial - sa.initial[::-1])) < 1e-12
    assert np.max(np.abs(sb.probe_values[1] - sa.probe_values[1])) < 1e-12


def test_policy_and_gradient(pair):
    sa, _ = pair
    assert sa.diagnostics["gradient_positive"]
    assert sa.diagnostics["policy_constant_plus"]
    assert np.all(sa.controls[:-1] == P.omega)
    assert np.all(np.isnan(sa.controls[-1]))
    assert sa.times[0] == 0.0 and sa.times[-1] == T


def test_probe_trace_increasing(pair):
    sa, _ = pair
    for row in sa.probe_values:
        assert np.all(np.diff(row) > 0)
    assert sa.value_at_horizon(T, probe=1) == pytest.approx(sa.value(0.0), abs=1e-12)
    with pytest.raises(ValueError):
        sa.value_at_horizon(2 * T)


def test_truncation_insensitive(pair):
    sa, _ = pair
    wide = solve_sa(T, P, grid=HorizonGrid.build(T, P, width_factor=2.0))
    assert wide.value(0.0) == pytest.approx(sa.value(0.0), abs=1e-12)


def test_expected_final_angle(pair):
    sa, _ = pair
    assert expected_final_angle(0.5, T, P) == pytest.approx(sa.value(0.5), abs=1e-12)


def test_reaching_time_noiseless():
    p = SystemParams.gamma_limit(10.0)
    r = reaching_time(0.0, p, full=True)
    assert abs(r.R - math.pi / 10) <= r.tol_T
    b = r.brackets
    assert b[-1][1] - b[-1][0] <= r.tol_T
    assert all(lo0 <= lo1 and hi1 <= hi0 for (lo0, hi0), (lo1, hi1) in zip(b, b[1:]))


def test_reaching_time_at_target():
    assert reaching_time(math.pi, P) == 0.0
    assert reaching_time(-4.0, P) == 0.0


def test_reaching_time_bracketed_by_drift_bounds():
    p = SystemParams(1.0, 10.0)
    r = reaching_time(0.0, p, h=0.04)
    assert math.pi / 12 <= r <= math.pi / 8


@settings(max_examples=5, deadline=None)
@given(y=st.floats(0.0, 3.0))
def test_reaching_time_decreasing_in_start(y):
    p = SystemParams(1.0, 20.0)
    r0 = reaching_time(y, p, h=0.05, tol_T=1e-5)
    r1 = reaching_time(min(y + 0.1, 3.1), p, h=0.05, tol_T=1e-5)
    assert r1 <= r0 + 1e-5


def test_reaching_time_regression():
    assert reaching_time(0.0, P) == pytest.approx(0.33771545783294815, rel=1e-9)


def test_csv(pair, tmp_path):
    sa, _ = pair
    p = sa.write_csv(tmp_path / "s.csv", every=50)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,theta,value,control"
    per_level = len(range(0, sa.grid.m, 50))
    assert len(lines) == 1 + per_level * len(sa.times)
