import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qptprobe.qptmodel import (
    SubgapChannel,
    TwoGapModelParams,
    bessel_factor,
    channel_amplitude,
    gamma_thermal_single,
    gamma_total,
    log_rate_gradient,
    re_admittance,
    rn_from_ambegaokar_baratoff,
    thermal_prefactor,
    thermal_rate_bessel,
)
from qptprobe.units import GHZ, HBAR, KB, UEV

W5 = 2 * math.pi * 5 * GHZ
CQ = 70e-15


def test_oracles_recompute_to_frozen_values():
    assert float(oracles.recompute_spot_rate()) == oracles.SPOT_RATE_190UEV_100MK_5GHZ
    assert float(oracles.recompute_rn()) == oracles.RN_190UEV_5GHZ_70FF
    assert float(oracles.recompute_amplitude()) == pytest.approx(oracles.AMPLITUDE_X01_20UEV_10K_70FF_5GHZ, rel=1e-15)


def test_spot_value():
    assert gamma_thermal_single(0.1, W5, 190.0) == pytest.approx(oracles.SPOT_RATE_190UEV_100MK_5GHZ, rel=1e-12)


def test_zero_temperature_limit():
    assert gamma_thermal_single(0.0, W5, 190.0) == 0.0
    assert gamma_thermal_single(1e-6, W5, 190.0) == 0.0
    with pytest.raises(ValueError):
        gamma_thermal_single(-0.01, W5, 190.0)


def test_monotone_in_temperature():
    assert gamma_thermal_single(0.11, W5, 190.0) > gamma_thermal_single(0.10, W5, 190.0)


def test_rn_oracle_and_scaling():
    lj = 1 / (W5**2 * CQ)
    assert rn_from_ambegaokar_baratoff(190.0, lj, CQ) == pytest.approx(oracles.RN_190UEV_5GHZ_70FF, rel=1e-12)
    assert rn_from_ambegaokar_baratoff(380.0, lj, CQ) == pytest.approx(2 * rn_from_ambegaokar_baratoff(190.0, lj, CQ))
    rn = rn_from_ambegaokar_baratoff(190.0, lj, CQ)
    assert 1 / (rn * CQ) == pytest.approx(HBAR * W5**2 / (math.pi * 190.0 * UEV), rel=1e-12)


def test_amplitude_oracle_and_linearity():
    a = channel_amplitude(0.1, 20.0, 1e4, CQ, W5)
    assert a == pytest.approx(oracles.AMPLITUDE_X01_20UEV_10K_70FF_5GHZ, rel=1e-12)
    assert channel_amplitude(0.2, 20.0, 1e4, CQ, W5) == pytest.approx(2 * a)
    assert channel_amplitude(0.1, 20.0, 2e4, CQ, W5) == pytest.approx(a / 2)
    with pytest.raises(ValueError):
        channel_amplitude(1.5, 20.0, 1e4, CQ, W5)


def test_channel_consistency():
    c = SubgapChannel.from_path(0.1, 20.0, 1e4, CQ, W5)
    assert c.check_consistency(CQ, W5)
    assert not SubgapChannel(20.0, c.amplitude * 1.01, 0.1, 1e4).check_consistency(CQ, W5)


def test_admittance_linear_in_conductance():
    y1 = re_admittance(0.1, W5, 190.0, 1e4)
    assert re_admittance(0.1, W5, 190.0, 2e4) == y1 / 2
    assert re_admittance(0.0, W5, 190.0, 1e4) == 0.0


def test_admittance_warns_when_hot():
    with pytest.warns(RuntimeWarning, match="delta/kT"):
        re_admittance(1.0, W5, 190.0, 1e4)


def test_bessel_factor_large_argument_finite():
    x = np.array([1.0, 50.0, 800.0])
    v = bessel_factor(x)
    assert np.all(np.isfinite(v))
    assert v[-1] == pytest.approx(math.sqrt(math.pi / (2 * 800.0)) * (1 - 1 / (8 * 800.0)), rel=1e-6)


@pytest.mark.parametrize("x", [5.0, 8.0, 12.5, 20.0])
def test_bessel_path_matches_ratio_oracle(x):
    t = HBAR * W5 / (2 * KB * x)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ratio = thermal_rate_bessel(t, W5, 190.0, CQ) / gamma_thermal_single(t, W5, 190.0)
    assert ratio == pytest.approx(oracles.bessel_to_closed_form_ratio(x), rel=1e-10)


def test_bessel_path_within_one_percent_beyond_x_13():
    for x in np.geomspace(13.0, 30.0, 12):
        t = HBAR * W5 / (2 * KB * x)
        assert thermal_rate_bessel(t, W5, 190.0, CQ) / gamma_thermal_single(t, W5, 190.0) == pytest.approx(1, abs=0.01)


def test_reduction_to_single_gap():
    p = TwoGapModelParams(1.3, 190.0, W5)
    t = np.linspace(0.01, 0.3, 50)
    np.testing.assert_allclose(gamma_total(t, p), 1.3 + gamma_thermal_single(t, W5, 190.0), rtol=1e-12)
    assert gamma_total(0.0, p) == 1.3


def test_subgap_dominates_at_50mk():
    a = 1e-8
    p = TwoGapModelParams(1.0, 190.0, W5, (SubgapChannel(20.0, a),))
    main = gamma_thermal_single(0.05, W5, 190.0)
    assert gamma_total(0.05, p) - 1.0 > 10 * main


def test_channel_additivity():
    c1, c2 = SubgapChannel(20.0, 1e-8), SubgapChannel(40.0, 1e-6)
    t = np.linspace(0.02, 0.25, 20)
    both = gamma_total(t, TwoGapModelParams(1.0, 190.0, W5, (c1, c2)))
    one = gamma_total(t, TwoGapModelParams(1.0, 190.0, W5, (c1,)))
    iso = thermal_prefactor(t, W5) * c2.amplitude * np.exp(-c2.delta * UEV / (KB * t))
    np.testing.assert_allclose(both - one, iso, rtol=1e-9)


def test_channels_sorted_and_bounded():
    p = TwoGapModelParams(1.0, 190.0, W5, (SubgapChannel(40.0, 1.0), SubgapChannel(20.0, 1.0)))
    assert [c.delta for c in p.channels] == [20.0, 40.0]
    with pytest.raises(ValueError, match="not below"):
        TwoGapModelParams(1.0, 190.0, W5, (SubgapChannel(200.0, 1.0),))


@given(
    gne=st.floats(0.01, 100), d0=st.floats(100, 300), ratio=st.floats(0.03, 0.5),
    log_a=st.floats(-12, -3), t=st.floats(0.02, 0.3),
)
@settings(max_examples=50, deadline=None)
def test_log_gradient_matches_finite_differences(gne, d0, ratio, log_a, t):
    vals = np.array([gne, d0, 10**log_a, ratio * d0])

    def lnrate(v):
        return math.log(gamma_total(t, TwoGapModelParams(v[0], v[1], W5, (SubgapChannel(v[3], v[2]),))))

    grad = log_rate_gradient(t, TwoGapModelParams(gne, d0, W5, (SubgapChannel(ratio * d0, 10**log_a),)))[0]
    for i in range(4):
        h = 1e-5 * vals[i]
        up, dn = vals.copy(), vals.copy()
        up[i] += h
        dn[i] -= h
        fd = (lnrate(up) - lnrate(dn)) / (2 * h)
        # compare elasticities; the absolute floor sits well above the
        # cancellation noise of the central difference
        assert grad[i] * vals[i] == pytest.approx(fd * vals[i], rel=1e-5, abs=1e-8)


@given(t=st.floats(0.005, 0.5))
@settings(max_examples=30, deadline=None)
def test_rate_increases_with_temperature(t):
    # thermal part only: near 5 mK it sits below float resolution of gamma_ne
    p = TwoGapModelParams(0.0, 190.0, W5, (SubgapChannel(20.0, 1e-8),))
    assert gamma_total(t * 1.001, p) > gamma_total(t, p)
