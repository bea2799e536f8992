import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhjb.bounds import PurityTarget, preparation_bounds, t_jacobs, tau_wr
from qhjb.sde_core import SystemParams

mpmath.mp.dps = 40


def wr_oracle(P, gamma):
    s = mpmath.sqrt(2 * mpmath.mpf(P) - 1)
    return s * mpmath.atanh(s) / (8 * gamma)


def jacobs_oracle(P, gamma):
    return -mpmath.log(2 - 2 * mpmath.mpf(P)) / (8 * gamma)


@pytest.mark.parametrize("P,wr,tj", [
    (0.6, 0.026900558810250252431, 0.027892943914276219471),
    (0.75, 0.077903155017528814174, 0.086643397569993163677),
    (0.9, 0.16140335286150151458, 0.20117973905426254683),
    (0.99, 0.32719325107362101953, 0.48900287567851825733),
])
def test_reference_values(P, wr, tj):
    assert tau_wr(P, 1.0) == pytest.approx(wr, rel=1e-13)
    assert t_jacobs(P, 1.0) == pytest.approx(tj, rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(P=st.floats(0.5001, 0.9999), g=st.floats(0.01, 100.0))
def test_against_mpmath(P, g):
    assert tau_wr(P, g) == pytest.approx(float(wr_oracle(P, g)), rel=1e-11)
    assert t_jacobs(P, g) == pytest.approx(float(jacobs_oracle(P, g)), rel=1e-11)


@settings(max_examples=100, deadline=None)
@given(P=st.floats(0.501, 0.999))
def test_jacobs_exceeds_wr(P):
    # the ordering that makes t_LB > t_UB everywhere on the open interval
    assert t_jacobs(P, 1.0) > tau_wr(P, 1.0)


def test_edges():
    assert tau_wr(0.5, 1.0) == 0.0
    assert t_jacobs(0.5, 1.0) == 0.0
    for f in (tau_wr, t_jacobs):
        with pytest.raises(ValueError):
            f(1.0, 1.0)
        with pytest.raises(ValueError):
            f(0.4, 1.0)
        with pytest.raises(ValueError):
            f(0.9, 0.0)


def test_scaling_in_gamma():
    assert tau_wr(0.9, 2.0) == tau_wr(0.9, 1.0) / 2
    assert t_jacobs(0.9, 4.0) == t_jacobs(0.9, 1.0) / 4


def test_target_validation():
    for bad in (dict(P=0.5), dict(P=1.0), dict(P=0.9, theta_target=-0.1),
                dict(P=0.9, theta_target=4.0)):
        with pytest.raises(ValueError):
            PurityTarget(**bad)


def test_composition_with_stub_solvers():
    seen = []

    def hit(y, p):
        seen.append(("hit", y))
        return 0.25

    def hor(y, p):
        seen.append(("hor", y))
        return 0.5

    p = SystemParams(1.0, 10.0, 0.1)
    b = preparation_bounds(PurityTarget(0.9, math.pi / 2), p, hit, hor,
                           mc_rotation=lambda y, q: (0.7, 0.01))
    assert seen == [("hit", math.pi / 2), ("hor", math.pi / 2)]
    assert b.tau_UB == tau_wr(0.9, 1.0) + 0.25
    assert b.t_LB == t_jacobs(0.9, 1.0) + 0.5
    assert b.t_UB == tau_wr(0.9, 1.0) + 0.5
    assert not b.ordered
    assert b.sign_correction_applied
    assert (b.mc_rotation_time, b.mc_rotation_stderr) == (0.7, 0.01)
    assert set(b.to_dict()) >= {"tau_UB", "t_LB", "t_UB", "ordered"}


def test_requires_dominance():
    with pytest.raises(ValueError):
        preparation_bounds(PurityTarget(0.9), SystemParams(1.0, 2.0, 0.1),
                           lambda y, p: 0.0, lambda y, p: 0.0)


def test_full_regression():
    b = preparation_bounds(PurityTarget(0.99), SystemParams(1.0, 10.0, 0.1))
    assert b.tau_UB == pytest.approx(0.6520147023515532, rel=1e-9)
    assert b.t_LB == pytest.approx(0.8267183335114663, rel=1e-9)
    assert b.t_UB == pytest.approx(0.6649087089065695, rel=1e-9)
