import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhjb import montecarlo as mc
from qhjb.montecarlo import (
    CHUNK,
    EnsembleConfig,
    discounted_hamiltonian_time,
    estimate_discounted_hitting,
    estimate_expected_trajectory,
    estimate_hitting_time,
    first_crossing,
    hamiltonian_time,
    hitting_times,
    omega_sweep,
    summarize_costs,
    target_interval,
)
from qhjb.sde_core import BangBangPolicy, ConstantPolicy, SystemParams, hitting_time, simulate

P = SystemParams(gamma=1.0, omega=10.0, lam=3.0)
BANG = BangBangPolicy(10.0)


def test_config_defaults():
    cfg = EnsembleConfig()
    assert cfg.resolve_dt(P) == 1e-4
    assert cfg.resolve_dt(SystemParams(2.0, 10.0)) == 5e-5
    assert cfg.resolve_t_max(P) == pytest.approx(50 / 3)
    with pytest.raises(ValueError):
        cfg.resolve_t_max(SystemParams(1.0, 10.0))
    for bad in ({"n_traj": 0}, {"dt": 0.0}, {"t_max": -1.0}):
        with pytest.raises(ValueError):
            EnsembleConfig(**bad)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("QHJB_THREADS", "3")
    assert mc.thread_count() == 3
    monkeypatch.setenv("QHJB_THREADS", "0")
    assert mc.thread_count() == 1


def test_noiseless_hitting_exact():
    p = SystemParams.gamma_limit(10.0, 3.0)
    tau = hitting_times(0.0, BANG, EnsembleConfig(n_traj=4), p)
    assert np.allclose(tau, math.pi / 10, rtol=0, atol=1e-12)
    st_ = estimate_discounted_hitting(0.0, BANG, EnsembleConfig(n_traj=4), p)
    assert st_.mean == pytest.approx(discounted_hamiltonian_time(10.0, 3.0), abs=1e-12)
    assert st_.std_error == pytest.approx(0.0, abs=1e-15)


def test_matches_scalar_simulation():
    cfg = EnsembleConfig(n_traj=6, master_seed=7, t_max=5.0)
    tau = hitting_times(0.4, BANG, cfg, P)
    for i in range(6):
        tr = simulate(0.4, BANG, cfg.resolve_dt(P), 5.0, 7, True, P, index=i)
        assert tau[i] == pytest.approx(hitting_time(tr), rel=1e-9)


def test_thread_and_batch_invariance(monkeypatch):
    cfg = EnsembleConfig(n_traj=CHUNK + 40, master_seed=3, t_max=2.0, dt=1e-3)
    monkeypatch.setenv("QHJB_THREADS", "1")
    a = hitting_times(0.0, BANG, cfg, P)
    monkeypatch.setenv("QHJB_THREADS", "4")
    b = hitting_times(0.0, BANG, cfg, P)
    assert np.array_equal(a, b)
    small = hitting_times(0.0, BANG, EnsembleConfig(n_traj=40, master_seed=3, t_max=2.0, dt=1e-3), P)
    assert np.array_equal(a[:40], small)


def test_seed_changes_paths():
    cfg = dict(n_traj=20, t_max=2.0, dt=1e-3)
    a = hitting_times(0.0, BANG, EnsembleConfig(master_seed=0, **cfg), P)
    b = hitting_times(0.0, BANG, EnsembleConfig(master_seed=1, **cfg), P)
    assert not np.array_equal(a, b)


def test_start_outside_interval():
    tau = hitting_times(math.pi, BANG, EnsembleConfig(n_traj=3), P)
    assert np.array_equal(tau, np.zeros(3))


def test_censoring():
    cfg = EnsembleConfig(n_traj=10, t_max=1e-3)
    st_ = estimate_discounted_hitting(0.0, BANG, cfg, P)
    assert st_.n_censored == 10
    assert st_.mean == pytest.approx(1 / 3)
    assert st_.censored_warning
    und = estimate_hitting_time(0.0, BANG, cfg, SystemParams(1.0, 10.0))
    assert math.isnan(und.mean) and und.censored_warning


def test_summarize_known_sample():
    tau = np.array([0.1, 0.3, np.nan])
    st_ = summarize_costs(tau, 2.0, EnsembleConfig(n_traj=3))
    c = np.array([-math.expm1(-0.2) / 2, -math.expm1(-0.6) / 2, 0.5])
    assert st_.mean == pytest.approx(c.mean(), rel=1e-14)
    assert st_.std_error == pytest.approx(c.std(ddof=1) / math.sqrt(3), rel=1e-12)
    assert st_.n_censored == 1 and not st_.censored_warning
    und = summarize_costs(tau, 0.0, EnsembleConfig(n_traj=3))
    assert und.mean == pytest.approx(0.2) and und.censored_warning


def test_discounted_requires_lambda():
    with pytest.raises(ValueError):
        estimate_discounted_hitting(0.0, BANG, EnsembleConfig(n_traj=2, t_max=1.0),
                                    SystemParams(1.0, 10.0))


def test_control_bound_enforced():
    from qhjb.sde_core import ControlBoundError
    with pytest.raises(ControlBoundError):
        hitting_times(0.0, ConstantPolicy(11.0), EnsembleConfig(n_traj=2), P)


def test_first_crossing():
    t = np.array([0.0, 1.0, 2.0])
    assert first_crossing(t, [0.0, 2.0, 4.0], level=3.0) == pytest.approx(1.5)
    assert first_crossing(t, [0.0, -2.0, -4.0], level=3.0) == pytest.approx(1.5)
    assert first_crossing(t, [0.0, 1.0, 2.0], level=3.0) is None
    assert first_crossing(t, [5.0, 1.0, 2.0], level=3.0) == 0.0


def test_expected_trajectory_noiseless():
    p = SystemParams.gamma_limit(10.0)
    times = np.linspace(0, 0.5, 51)
    et = estimate_expected_trajectory(0.0, ConstantPolicy(10.0), EnsembleConfig(n_traj=3), p, times)
    assert np.allclose(et.mean, 10.0 * et.times, atol=1e-10)
    assert et.crossing == pytest.approx(math.pi / 10, abs=1e-10)
    with pytest.raises(ValueError):
        estimate_expected_trajectory(0.0, ConstantPolicy(10.0), EnsembleConfig(n_traj=3), p,
                                     [0.2, 0.1])


def test_expected_trajectory_within_drift_sandwich():
    times = np.array([0.0, 0.1, 0.2])
    et = estimate_expected_trajectory(0.0, ConstantPolicy(10.0),
                                      EnsembleConfig(n_traj=2000, dt=1e-3), P, times)
    assert et.mean[0] == 0.0
    for t, m, se in zip(et.times[1:], et.mean[1:], et.std_error[1:]):
        assert 8 * t - 4 * se <= m <= 12 * t + 4 * se


def test_hamiltonian_lines():
    assert hamiltonian_time(10.0) == math.pi / 10
    assert discounted_hamiltonian_time(10.0, 3.0) == pytest.approx(
        (1 - math.exp(-0.3 * math.pi)) / 3)


@settings(max_examples=50, deadline=None)
@given(om=st.floats(2.5, 1e4), lam=st.floats(1e-3, 1e3))
def test_discounted_hamiltonian_below_both(om, lam):
    d = discounted_hamiltonian_time(om, lam)
    assert 0 < d <= min(hamiltonian_time(om), 1 / lam) * (1 + 1e-12)


def test_target_interval():
    assert target_interval(0.0, math.pi) == (-math.pi, math.pi)
    lo, hi = target_interval(math.pi / 2, -math.pi / 2)
    assert (lo, hi) == pytest.approx((-math.pi / 2, 3 * math.pi / 2))
    assert target_interval(1.0, 1.0) == (1.0, 1.0)


def test_sweep_isolates_failures():
    cfg = EnsembleConfig(n_traj=8, t_max=3.0, dt=1e-3)
    rows = omega_sweep([2.0, 10.0], 0.0, cfg, gamma=1.0, lam=3.0, n_grid=51, tol=1e-8)
    bad, good = rows
    assert bad.error and math.isnan(bad.mc_mean)
    assert good.error is None
    assert 0 < good.mc_mean < 1 / 3 and 0 < good.pde_value < 1 / 3
