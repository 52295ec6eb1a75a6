"""Physical constants and unit conversions (SI 2019 exact values)."""

import numpy as np
from scipy import constants

HBAR = constants.hbar
H = constants.h
KB = constants.k
E_CHARGE = constants.e

UEV = 1e-6 * E_CHARGE  # joules per microelectronvolt
GHZ = 1e9
MK = 1e-3


def uev_to_joule(x):
    return np.asarray(x, dtype=float) * UEV


def joule_to_uev(x):
    return np.asarray(x, dtype=float) / UEV


def ghz_to_omega(f_ghz):
    """Transition frequency in GHz to angular frequency in rad/s."""
    return 2.0 * np.pi * np.asarray(f_ghz, dtype=float) * GHZ
