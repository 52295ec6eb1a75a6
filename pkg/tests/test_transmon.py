import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qptprobe.transmon import (
    QubitParams,
    TruncationError,
    charge_dispersion,
    cpb_spectrum,
    parity_splitting,
    transition_frequency,
)


def test_free_charge_levels():
    ev = cpb_spectrum(1.0, 0.0, 0.0, n_levels=5)
    np.testing.assert_allclose(ev, [0, 4, 4, 16, 16], atol=1e-12)


def test_free_charge_transition():
    assert transition_frequency(1.0, 0.0, 0.0, 0, 1) == pytest.approx(4.0, abs=1e-12)


@given(ng=st.floats(-2, 2), ratio=st.floats(1, 200))
@settings(max_examples=40, deadline=None)
def test_spectrum_even_and_periodic(ng, ratio):
    ec = 0.3
    a = cpb_spectrum(ec, ratio * ec, ng)
    for other in (cpb_spectrum(ec, ratio * ec, ng + 1), cpb_spectrum(ec, ratio * ec, -ng)):
        np.testing.assert_allclose(other, a, rtol=1e-12, atol=1e-12 * ec)


def test_telescoping_transitions():
    ec, ej = 0.3, 7.5
    f02 = transition_frequency(ec, ej, 0.1, 0, 2)
    assert f02 == pytest.approx(
        transition_frequency(ec, ej, 0.1, 0, 1) + transition_frequency(ec, ej, 0.1, 1, 2), rel=1e-13
    )


def test_negative_anharmonicity():
    assert transition_frequency(0.3, 15.0, 0.0, 1, 2) < transition_frequency(0.3, 15.0, 0.0, 0, 1)


@pytest.mark.parametrize("ratio", [1, 50, 1e3, 1e4])
def test_doubling_cutoff_moves_levels_below_1e_10(ratio):
    ev = cpb_spectrum(0.3, 0.3 * ratio, 0.3)
    for cutoff in (200, 400):
        ref = cpb_spectrum(0.3, 0.3 * ratio, 0.3, cutoff=cutoff)
        assert np.max(np.abs(ev - ref) / np.maximum(np.abs(ref), 0.3)) < 1e-10


def test_explicit_cutoff_is_checked_not_grown():
    cpb_spectrum(0.3, 15.0, 0.0, cutoff=30)
    with pytest.raises(TruncationError, match="not converged"):
        cpb_spectrum(0.3, 3000.0, 0.3, cutoff=30)


def test_cutoff_too_small():
    with pytest.raises(TruncationError):
        cpb_spectrum(0.3, 15.0, 0.0, n_levels=5, cutoff=10)


@pytest.mark.parametrize("bad", [(0.0, 1.0), (-1.0, 1.0), (1.0, -1.0)])
def test_invalid_energies(bad):
    with pytest.raises(ValueError):
        cpb_spectrum(*bad)


def test_dispersion_leading_oracle_within_10_percent():
    eps = charge_dispersion(0.3, 15.0, 0).epsilon
    assert eps == pytest.approx(oracles.transmon_dispersion_leading(0.3, 15.0, 0), rel=0.10)


@pytest.mark.parametrize("ratio", [20, 25, 50, 80])
@pytest.mark.parametrize("m", [0, 1])
def test_dispersion_corrected_oracle(ratio, m):
    eps = charge_dispersion(0.3, 0.3 * ratio, m).epsilon
    assert eps == pytest.approx(oracles.transmon_dispersion_corrected(0.3, 0.3 * ratio, m), rel=0.01)


def test_dispersion_decreases_with_ratio():
    eps = [charge_dispersion(0.3, 0.3 * r, 0).epsilon for r in (5, 10, 20, 30, 50, 80)]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert charge_dispersion(0.3, 6.0, 0).epsilon > 10 * charge_dispersion(0.3, 15.0, 0).epsilon


def test_dispersion_free_limit():
    # E_J = 0, level 0: 4 E_C (1/2)^2 - 0
    assert charge_dispersion(1.0, 0.0 + 1e-12, 0).epsilon == pytest.approx(1.0, rel=1e-9)


def test_beat_ratio_at_25():
    d = charge_dispersion(0.3, 7.5, 0)
    assert d.beat_12 / d.beat_01 > 10


@pytest.mark.parametrize("ratio", np.linspace(10.5, 60, 8))
def test_beat_12_exceeds_beat_01(ratio):
    d = charge_dispersion(0.3, 0.3 * ratio, 0)
    assert d.beat_12 > d.beat_01


@pytest.mark.parametrize("ratio", [20, 30, 40, 50])
def test_beat_finite_in_device_range(ratio):
    b = charge_dispersion(0.3, 0.3 * ratio, 0).beat_01
    assert 0 < b < math.inf


def test_splitting_vanishes_at_quarter_charge():
    assert parity_splitting(0.3, 7.5, 0, 1, ng=0.25) == pytest.approx(0.0, abs=1e-13)
    assert parity_splitting(0.3, 7.5, 0, 1, ng=0.0) > 0


def test_qubit_params_validation():
    with pytest.raises(ValueError):
        QubitParams(ec=0.3, ej=0.1)
    with pytest.raises(ValueError):
        QubitParams(ec=0.3, ej=0.3 * 2e4)
    q = QubitParams.from_ratio(25, cq=70e-15)
    assert q.omega**2 * q.lj * q.cq == pytest.approx(1.0, rel=1e-12)
    assert q.synthetic
    with pytest.raises(ValueError, match="inconsistent"):
        QubitParams(ec=0.3, ej=7.5, f01=q.f01, cq=70e-15, lj=q.lj * 1.01)
