"""Synthetic temperature sweeps and device cohorts with recorded ground truth.

All values are synthetic; nothing here is measured data. Cohorts are drawn
so their statistics resemble the reported population: gap medians near
190 ueV, subgap gaps near a tenth of that, QPT switching times between 1 ms
and 1.5 s, and relaxation rates two or more decades above QPT rates.
"""

import copy
import math

import numpy as np

from .paritysim import rng_stream
from .qptmodel import SubgapChannel, TwoGapModelParams, gamma_total, thermal_prefactor
from .records import DESIGNS, DeviceRecord, Material, Style, TemperatureSweep
from .units import GHZ, KB, MK, UEV

STREAM_SWEEP = 5
STREAM_COHORT = 6

DEFAULT_TEMPS_MK = np.linspace(20.0, 250.0, 12)
REFERENCE_GAP_UEV = 185.0  # independent I-V cross-check value


def default_temperatures(n=12, t_min=20.0, t_max=250.0):
    return np.linspace(t_min, t_max, n)


def anomalous_amplitude(delta1, gamma_ne, omega, strength=3.0, t_ref_mk=60.0):
    """Amplitude A whose subgap term equals ``strength * gamma_ne`` at ``t_ref_mk``."""
    t = t_ref_mk * MK
    kernel = thermal_prefactor(t, omega) * math.exp(-delta1 * UEV / (KB * t))
    return strength * gamma_ne / kernel


def simulate_sweep(params: TwoGapModelParams, temps_mk=None, noise=0.05, seed=0, index=0, with_errors=True):
    """Model rates at ``temps_mk`` with log-normal multiplicative noise of
    relative width ``noise``; reported errors are ``noise * rate``."""
    temps_mk = DEFAULT_TEMPS_MK if temps_mk is None else np.asarray(temps_mk, dtype=float)
    clean = np.asarray(gamma_total(temps_mk * MK, params))
    if noise > 0:
        rng = rng_stream(seed, index, STREAM_SWEEP)
        rates = clean * np.exp(noise * rng.standard_normal(len(clean)))
    else:
        rates = clean.copy()
    errs = noise * rates if (with_errors and noise > 0) else None
    return TemperatureSweep(temps_mk, rates, errs)


DEFAULT_COHORT_SPEC = {
    "f01_ghz": [4.6, 5.4],
    "noise": 0.05,
    "temps_mk": {"n": 12, "t_min": 20.0, "t_max": 250.0},
    "delta0_median_uev": 190.0,
    "delta0_sd_uev": 3.0,
    "ratio_median": 0.1,
    "ratio_log_sd": 0.25,
    "anomalous_fraction": 0.5,
    "anomaly_strength": [2.0, 20.0],
    "gamma_ne_log10": [-0.5, 1.0],
    "groups": [
        {"material": "Nb", "designs": "ABCDEFG", "per_design": 5, "t1_us_median": 120.0,
         "qpt_log10_range": [-0.1, 1.8]},
        {"material": "Ta", "designs": "DEFG", "per_design": 3, "t1_us_median": 150.0,
         "qpt_log10_range": [-0.1, 1.8]},
        {"material": "Al", "designs": "DEFG", "per_design": 4, "t1_us_median": 60.0,
         "admittance_slope": {"Tapered": 15.0, "NonTapered": 55.0}, "admittance_intercept": 1.0},
        {"material": "NbN", "designs": "DEFG", "per_design": 4, "t1_us_median": 40.0,
         "admittance_slope": {"Tapered": 42.0, "NonTapered": 154.0}, "admittance_intercept": 2.8},
    ],
    # normalised Re[Y] grows exponentially with paddle area, 1 at design G
    "re_y_area_scale_um2": 30000.0,
    "admittance_rel_noise": 0.05,
}


def re_y_for_design(design, scale_um2):
    return math.exp((design.paddle_area - DESIGNS["G"].paddle_area) / scale_um2)


def make_cohort(seed: int, spec=None):
    """Draw a synthetic cohort.

    Returns
    -------
    records : list of DeviceRecord
        Each with a temperature sweep.
    truth : dict
        Ground-truth model parameters per device, the generating spec and a
        labelled reference-gap row.
    """
    spec = copy.deepcopy(DEFAULT_COHORT_SPEC if spec is None else spec)
    rng = rng_stream(seed, 0, STREAM_COHORT)
    tcfg = spec["temps_mk"]
    temps = default_temperatures(tcfg["n"], tcfg["t_min"], tcfg["t_max"])
    records, truth = [], {}
    k = 0
    for group in spec["groups"]:
        material = Material(group["material"])
        for name in group["designs"]:
            design = DESIGNS[name]
            for _ in range(group["per_design"]):
                k += 1
                dev = f"{material.value}-{name}-{k:03d}"
                f01 = rng.uniform(*spec["f01_ghz"])
                t1 = group["t1_us_median"] * math.exp(0.3 * rng.standard_normal())
                re_y = re_y_for_design(design, spec["re_y_area_scale_um2"])
                if "admittance_slope" in group:
                    slope = group["admittance_slope"][design.style.value]
                    qpt = group["admittance_intercept"] + slope * re_y
                    qpt *= 1.0 + spec["admittance_rel_noise"] * rng.standard_normal()
                    qpt = max(qpt, 0.7)
                else:
                    lo, hi = group["qpt_log10_range"]
                    qpt = 10.0 ** rng.uniform(lo, hi)
                omega = 2.0 * math.pi * f01 * GHZ
                delta0 = spec["delta0_median_uev"] + spec["delta0_sd_uev"] * rng.standard_normal()
                gne = 10.0 ** rng.uniform(*spec["gamma_ne_log10"])
                anomalous = bool(rng.random() < spec["anomalous_fraction"])
                chans = ()
                if anomalous:
                    ratio = spec["ratio_median"] * math.exp(spec["ratio_log_sd"] * rng.standard_normal())
                    delta1 = ratio * delta0
                    strength = 10.0 ** rng.uniform(*np.log10(spec["anomaly_strength"]))
                    chans = (SubgapChannel(delta1, anomalous_amplitude(delta1, gne, omega, strength)),)
                params = TwoGapModelParams(gne, delta0, omega, chans)
                sweep = simulate_sweep(params, temps, spec["noise"], seed=seed, index=k)
                records.append(
                    DeviceRecord(dev, material, design, f01, t1, qpt, re_y=re_y, sweep=sweep)
                )
                truth[dev] = {
                    "material": material.value,
                    "design": name,
                    "f01_ghz": f01,
                    "gamma_ne": gne,
                    "delta0_uev": delta0,
                    "anomalous": anomalous,
                    "delta1_uev": chans[0].delta if chans else None,
                    "amplitude": chans[0].amplitude if chans else None,
                }
    return records, {
        "seed": seed,
        "spec": spec,
        "devices": truth,
        "references": [
            {"label": "iv_gap_crosscheck", "delta0_uev": REFERENCE_GAP_UEV,
             "note": "independent cryogenic I-V gap value, reference only"}
        ],
    }
