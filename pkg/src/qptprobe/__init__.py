"""Quasiparticle-tunneling simulation and analysis toolkit.

Charge-parity telegraph simulation, Ramsey parity mapping, Lorentzian PSD
rate extraction, thermal tunneling-rate models with gap fitting, and cohort
statistics across transmon designs.
"""

from .transmon import (
    ChargeDispersion,
    QubitParams,
    TruncationError,
    charge_dispersion,
    cpb_spectrum,
    transition_frequency,
)
from .paritysim import (
    CalibrationError,
    MappingConfig,
    ParityTrace,
    TelegraphConfig,
    Transition,
    apply_cp_mapping,
    calibrate_carrier,
    calibrate_delay,
    simulate_protocol_run,
    simulate_telegraph,
)
from .spectral import (
    FitError,
    LorentzianFit,
    PsdEstimate,
    average_psds,
    estimate_psd,
    fit_lorentzian,
)
from .qptmodel import (
    SubgapChannel,
    TwoGapModelParams,
    channel_amplitude,
    gamma_thermal_single,
    gamma_total,
    re_admittance,
    rn_from_ambegaokar_baratoff,
)
from .sweepfit import (
    SweepFitResult,
    bootstrap_uncertainty,
    classify_sweep,
    fit_temperature_sweep,
)
from .cohort import (
    DESIGNS,
    DeviceRecord,
    QubitDesign,
    TemperatureSweep,
    design_medians,
    fit_area_trends,
    fit_qpt_vs_admittance,
    gap_histograms,
    quality_factor,
)

__version__ = "0.1.0"
