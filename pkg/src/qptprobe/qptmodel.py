"""Thermal quasiparticle-tunneling rate models.

Library units: temperature in kelvin, angular frequency in rad/s, gaps in
microelectronvolts, resistance in ohms, capacitance in farads, rates in 1/s.

The total rate is a flat non-equilibrium background plus one thermally
activated term per tunneling path::

    gamma(T) = gamma_ne + sqrt(4 omega kT / (hbar pi))
               * [exp(-delta0/kT) + sum_i A_i exp(-delta_i/kT)]

The admittance form keeps the exact Bessel factor
``2 cosh(x) K0(x)``, ``x = hbar omega / 2kT``, with ``K0`` the modified
Bessel function of the second kind. It approaches the closed form above as
``1 - 1/(8x) + O(x^-2)`` for large ``x``.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import k0e

from .units import HBAR, KB, UEV


def thermal_prefactor(t, omega):
    """sqrt(4 omega k_B T / (hbar pi)) in 1/s."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(4.0 * omega * KB * np.maximum(t, 0.0) / (HBAR * np.pi))


def _boltzmann(delta_uev, t):
    """exp(-delta/kT), exactly 0 at T = 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        arg = np.where(t > 0, delta_uev * UEV / (KB * np.where(t > 0, t, 1.0)), np.inf)
    return np.exp(-arg)


def gamma_thermal_single(t, omega, delta0):
    """Thermal tunneling rate through a single gap ``delta0`` (ueV)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("temperature must be >= 0")
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    out = thermal_prefactor(t, omega) * _boltzmann(delta0, t)
    return out if np.ndim(out) else float(out)


def bessel_factor(x):
    """(e^x + e^-x) K0(x), evaluated without overflow for large x."""
    x = np.asarray(x, dtype=float)
    return (1.0 + np.exp(-2.0 * x)) * k0e(x)


def re_admittance(t, omega, delta, rn):
    """Real part of the junction admittance from thermal quasiparticles (S)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not (omega > 0 and delta > 0 and rn > 0):
        raise ValueError("need t >= 0 and positive omega, delta, rn")
    kt = KB * t
    pos = t > 0
    if np.any(pos & (delta * UEV < 3.0 * np.where(pos, kt, 1.0))):
        warnings.warn("delta/kT < 3: low-temperature approximation unreliable", RuntimeWarning, stacklevel=2)
    x = HBAR * omega / (2.0 * np.where(pos, kt, 1.0))
    # e^x K0(x) stays finite; e^-delta/kT supplies the decay
    val = (1.0 / rn) * (2.0 * delta * UEV / (HBAR * omega)) * bessel_factor(x) * _boltzmann(delta, t)
    val = np.where(pos, val, 0.0)
    return val if np.ndim(val) else float(val)


def rn_from_ambegaokar_baratoff(delta0, lj, cq):
    """Normal-state resistance with 1/(R_n C_q) = hbar / (pi delta0 L_J C_q)."""
    if not (delta0 > 0 and lj > 0 and cq > 0):
        raise ValueError("delta0, lj and cq must be positive")
    return np.pi * delta0 * UEV * lj / HBAR


def thermal_rate_bessel(t, omega, delta0, cq):
    """Re[Y]/C_q with R_n from Ambegaokar-Baratoff and L_J = 1/(omega^2 C_q)."""
    lj = 1.0 / (omega**2 * cq)
    rn = rn_from_ambegaokar_baratoff(delta0, lj, cq)
    return re_admittance(t, omega, delta0, rn) / cq


def channel_amplitude(x1, delta1, r1, cq, omega):
    """Prefactor A = x1 pi delta1 / (hbar omega^2 R1 C_q) of a subgap path."""
    if not 0 < x1 <= 1:
        raise ValueError("x1 must lie in (0, 1]")
    if not (delta1 > 0 and r1 > 0 and cq > 0 and omega > 0):
        raise ValueError("delta1, r1, cq and omega must be positive")
    return x1 * np.pi * delta1 * UEV / (HBAR * omega**2 * r1 * cq)


@dataclass(frozen=True)
class SubgapChannel:
    """High-transmission tunneling path with effective gap ``delta`` (ueV)."""

    delta: float
    amplitude: float
    x_frac: Optional[float] = None
    r_eff: Optional[float] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("channel gap must be positive")
        if not self.amplitude > 0:
            raise ValueError("channel amplitude must be positive")

    @classmethod
    def from_path(cls, x1, delta1, r1, cq, omega):
        return cls(delta1, float(channel_amplitude(x1, delta1, r1, cq, omega)), x1, r1)

    def check_consistency(self, cq, omega, rtol=1e-9):
        if self.x_frac is None or self.r_eff is None:
            return True
        a = channel_amplitude(self.x_frac, self.delta, self.r_eff, cq, omega)
        return abs(a - self.amplitude) <= rtol * abs(a)


@dataclass(frozen=True)
class TwoGapModelParams:
    gamma_ne: float
    delta0: float
    omega: float
    channels: Sequence[SubgapChannel] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.gamma_ne >= 0:
            raise ValueError("gamma_ne must be >= 0")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        chans = tuple(sorted(self.channels, key=lambda c: c.delta))
        for c in chans:
            if not c.delta < self.delta0:
                raise ValueError(f"subgap {c.delta} ueV not below delta0 {self.delta0} ueV")
        object.__setattr__(self, "channels", chans)


def gamma_total(t, params: TwoGapModelParams):
    """Total tunneling rate at temperature(s) ``t`` in kelvin."""
    t = np.asarray(t, dtype=float)
    bracket = _boltzmann(params.delta0, t)
    for c in params.channels:
        bracket = bracket + c.amplitude * _boltzmann(c.delta, t)
    out = params.gamma_ne + thermal_prefactor(t, params.omega) * bracket
    return out if np.ndim(out) else float(out)


def log_rate_gradient(t, params: TwoGapModelParams):
    """d ln(gamma) / d(gamma_ne, delta0, A_1, delta_1, ..., A_n, delta_n).

    Returns an array of shape ``(len(t), 2 + 2 n)``; gaps in ueV.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    g = np.atleast_1d(gamma_total(t, params))
    pre = thermal_prefactor(t, params.omega)
    inv_kt = UEV / (KB * t)
    cols = [np.ones_like(t), -pre * inv_kt * _boltzmann(params.delta0, t)]
    for c in params.channels:
        b = _boltzmann(c.delta, t)
        cols += [pre * b, -pre * c.amplitude * inv_kt * b]
    return np.column_stack(cols) / g[:, None]
