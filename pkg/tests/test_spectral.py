import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qptprobe.paritysim import MappingConfig, ParityTrace, TelegraphConfig, simulate_protocol_run, simulate_telegraph
from qptprobe.spectral import (
    FitError,
    PsdEstimate,
    Window,
    average_psds,
    estimate_psd,
    fit_lorentzian,
    log_bands,
    lorentzian,
)
from qptprobe.transmon import QubitParams


def trace_of(values, dt=1e-3):
    return ParityTrace(np.asarray(values, dtype=np.int8), dt)


def test_constant_trace_all_dc():
    psd = estimate_psd(trace_of(np.ones(1024)), 256)
    assert psd.power[0] > 0
    np.testing.assert_allclose(psd.power[1:], 0, atol=1e-25)


def test_alternating_trace_all_nyquist():
    psd = estimate_psd(trace_of(np.tile([1, -1], 512)), 256)
    assert psd.power[-1] > 0
    np.testing.assert_allclose(psd.power[:-1], 0, atol=1e-25)


@given(seed=st.integers(0, 2**32), seg=st.sampled_from([16, 64, 256]))
@settings(max_examples=20, deadline=None)
def test_parseval_mean_square(seed, seg):
    rng = np.random.default_rng(seed)
    tr = trace_of(rng.choice([-1, 1], size=seg * 8))
    psd = estimate_psd(tr, seg, Window.RECTANGULAR)
    assert np.sum(psd.power) * psd.df == pytest.approx(1.0, rel=1e-6)


def test_hann_window_runs():
    tr = simulate_telegraph(TelegraphConfig(50.0, n_samples=2**16))
    psd = estimate_psd(tr, 2**10, "Hann")
    assert psd.meta["window"] == "Hann" and np.all(psd.power >= 0)


def test_analytic_telegraph_spectrum_per_decade():
    gamma = 50.0
    tr = simulate_telegraph(TelegraphConfig(gamma, n_samples=2**20, seed=9))
    psd = estimate_psd(tr, 2**12)
    f, p = psd.freqs, psd.power
    for lo in (1.0, 10.0, 100.0):
        sel = (f >= lo) & (f < 10 * lo) & (f < 800)
        ref = np.mean([oracles.telegraph_psd_one_sided(x, gamma) for x in f[sel]])
        # finite sampling adds a small white floor; compare in the Lorentzian regime
        assert np.mean(p[sel]) == pytest.approx(ref, rel=0.10)


def test_noiseless_model_recovered():
    fs, n = 2000.0, 2**16
    freqs = np.fft.rfftfreq(n, 1 / fs)
    psd = PsdEstimate(freqs, lorentzian(freqs, 100.0, 0.8, 1e-5), 16, 1 / fs)
    fit = fit_lorentzian(psd)
    assert fit.gamma == pytest.approx(100.0, rel=1e-8)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-8)
    assert fit.floor == pytest.approx(1e-5, rel=1e-8)


@pytest.mark.parametrize("scale", [1e-6, 3.7, 1e5])
def test_fit_scale_invariance(scale):
    tr = simulate_telegraph(TelegraphConfig(20.0, n_samples=2**18, seed=1))
    psd = estimate_psd(tr, 2**13)
    scaled = dataclasses.replace(psd, power=psd.power * scale)
    a, b = fit_lorentzian(psd), fit_lorentzian(scaled)
    assert b.gamma == pytest.approx(a.gamma, rel=1e-9)
    assert b.amplitude == pytest.approx(a.amplitude * scale, rel=1e-6)


def test_round_trip_gamma_10_over_100_seeds():
    q = QubitParams.from_ratio(25)
    fits = [
        fit_lorentzian(estimate_psd(simulate_protocol_run(q, TelegraphConfig(10.0, seed=s), MappingConfig()), 2**16)).gamma
        for s in range(100)
    ]
    assert np.median(fits) == pytest.approx(10.0, rel=0.05)


def test_error_bars_match_scatter():
    fits = [fit_lorentzian(estimate_psd(simulate_telegraph(TelegraphConfig(10.0, seed=s, n_samples=2**18)), 2**14))
            for s in range(40)]
    scatter = np.std([f.gamma for f in fits], ddof=1)
    reported = np.median([f.gamma_err for f in fits])
    assert 0.6 < scatter / reported < 1.6


@pytest.mark.parametrize("switch_time, fs, n", [(1e-3, 20_000.0, 2**20), (1.5, 200.0, 2**19)])
def test_switching_time_range(switch_time, fs, n):
    gamma = 1.0 / switch_time
    tr = simulate_telegraph(TelegraphConfig(gamma, fs=fs, n_samples=n, seed=2))
    seg = 2**12 if switch_time < 0.01 else 2**15
    fit = fit_lorentzian(estimate_psd(tr, seg))
    assert fit.gamma == pytest.approx(gamma, rel=0.1)


def test_average_with_itself():
    psd = estimate_psd(simulate_telegraph(TelegraphConfig(10.0, n_samples=2**14)), 2**10)
    avg = average_psds([psd, psd])
    np.testing.assert_allclose(avg.power, psd.power, rtol=1e-15)
    assert avg.n_averages == 2 * psd.n_averages


def test_average_grid_mismatch():
    tr = simulate_telegraph(TelegraphConfig(10.0, n_samples=2**14))
    with pytest.raises(ValueError, match="grids"):
        average_psds([estimate_psd(tr, 256), estimate_psd(tr, 512)])


def _white_psds(k, seed, seg=256):
    rng = np.random.default_rng(seed)
    return [estimate_psd(trace_of(rng.choice([-1, 1], size=seg)), seg) for _ in range(k)]


def test_average_variance_scales_inverse_k():
    var = {}
    for k in (1, 4, 16):
        bins = np.array([average_psds(_white_psds(k, s)).power[10:100] for s in range(200)])
        var[k] = np.mean(np.var(bins, axis=0))
    assert var[1] / var[4] == pytest.approx(4, rel=0.2)
    assert var[1] / var[16] == pytest.approx(16, rel=0.2)


def test_average_deviation_decreases_with_count():
    gamma, seg = 30.0, 1024
    f = np.fft.rfftfreq(seg, 1 / 2000.0)[1:400]
    ref = np.array([oracles.telegraph_psd_one_sided(x, gamma) for x in f])
    meds = []
    for n in (1, 4, 16):
        devs = []
        for s in range(15):
            trs = [simulate_telegraph(TelegraphConfig(gamma, n_samples=seg, seed=s, index=i)) for i in range(n)]
            p = average_psds([estimate_psd(t, seg) for t in trs]).power[1:400]
            devs.append(np.max(np.abs(p / ref - 1)))
        meds.append(np.median(devs))
    assert meds[0] > meds[1] > meds[2]


def test_fit_needs_bins():
    f = np.fft.rfftfreq(16, 1e-3)
    with pytest.raises(ValueError, match="bins"):
        fit_lorentzian(PsdEstimate(f, np.ones_like(f), 1, 1e-3))


def test_zero_psd_is_fit_error():
    f = np.fft.rfftfreq(1024, 1e-3)
    with pytest.raises(FitError):
        fit_lorentzian(PsdEstimate(f, np.zeros_like(f), 1, 1e-3))


def test_log_bands_partition():
    f = np.linspace(0.1, 100, 5000)
    starts, counts = log_bands(f, 64)
    assert counts.sum() == len(f) and starts[0] == 0 and np.all(counts > 0)
    assert len(starts) <= 64


def test_segment_length_validation():
    tr = trace_of(np.ones(64))
    with pytest.raises(ValueError):
        estimate_psd(tr, 4)
    with pytest.raises(ValueError):
        estimate_psd(tr, 128)


def test_fit_metadata_records_convention():
    tr = simulate_telegraph(TelegraphConfig(10.0, n_samples=2**16))
    fit = fit_lorentzian(estimate_psd(tr, 2**12))
    d = fit.to_dict()
    assert "one-sided" in d["convention"] and math.isfinite(d["gamma_err"])
