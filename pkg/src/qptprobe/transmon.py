"""Cooper-pair-box / transmon spectra in the charge basis.

The Hamiltonian is

    H = 4 E_C (n - n_g)^2 - (E_J / 2) sum_n (|n><n+1| + |n+1><n|)

truncated to charge states ``n`` in ``[-cutoff, cutoff]`` around the nearest
integer to ``n_g``. All energies are frequency equivalents in GHz.

Levels are labelled by ordering at each ``n_g``; at the ``n_g = 1/2``
degeneracies of the ``E_J -> 0`` limit no adiabatic tracking is attempted.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .units import GHZ

DEFAULT_CUTOFF = 30
MAX_AUTO_CUTOFF = 2000
CONVERGENCE_RTOL = 1e-10
# Offset charge at which parity splittings are evaluated: maximal splitting.
DEFAULT_NG_BIAS = 0.0


class TruncationError(ValueError):
    """Charge-basis truncation too small for a converged spectrum."""


@dataclass(frozen=True)
class QubitParams:
    """Electrical description of one transmon.

    Parameters
    ----------
    ec, ej : float
        Charging and Josephson energies in GHz.
    f01 : float, optional
        0-1 transition frequency in GHz. Computed from ``ec``/``ej`` when
        omitted, as the carrier midway between the two parity branches.
    cq : float, optional
        Total qubit capacitance in farads.
    lj : float, optional
        Junction inductance in henries.
    """

    ec: float
    ej: float
    f01: Optional[float] = None
    cq: Optional[float] = None
    lj: Optional[float] = None
    synthetic: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not (self.ec > 0 and self.ej > 0):
            raise ValueError(f"ec and ej must be positive, got ec={self.ec}, ej={self.ej}")
        ratio = self.ej / self.ec
        if not 1.0 <= ratio <= 1e4:
            raise ValueError(f"ej/ec={ratio:g} outside the supported range [1, 1e4]")
        if self.f01 is None:
            f_even = transition_frequency(self.ec, self.ej, 0.0, 0, 1)
            f_odd = transition_frequency(self.ec, self.ej, 0.5, 0, 1)
            object.__setattr__(self, "f01", 0.5 * (f_even + f_odd))
        if self.f01 <= 0:
            raise ValueError("f01 must be positive")
        if self.cq is not None and self.lj is not None:
            lc = self.omega**2 * self.lj * self.cq
            if abs(lc - 1.0) > 1e-6:
                raise ValueError(
                    f"omega^2 * lj * cq = {lc:.9g}, inconsistent with f01 (must equal 1)"
                )

    @property
    def omega(self) -> float:
        """Angular 0-1 frequency in rad/s."""
        return 2.0 * np.pi * self.f01 * GHZ

    @property
    def ratio(self) -> float:
        return self.ej / self.ec

    @classmethod
    def from_ratio(cls, ratio: float, ec: float = 0.3, cq: Optional[float] = None):
        """Synthetic device with ``ej = ratio * ec``; ``lj`` follows from ``cq``."""
        q = cls(ec=ec, ej=ratio * ec, synthetic=True)
        if cq is None:
            return q
        lj = 1.0 / (q.omega**2 * cq)
        return cls(ec=ec, ej=ratio * ec, f01=q.f01, cq=cq, lj=lj, synthetic=True)


@dataclass(frozen=True)
class ChargeDispersion:
    """Charge dispersion of one level plus the parity beats of the two
    lowest transitions, all in GHz."""

    level: int
    epsilon: float
    beat_01: float
    beat_12: float
    ng_bias: float = DEFAULT_NG_BIAS


def _levels(ec, ej, ng, n_levels, cutoff):
    centre = np.floor(ng + 0.5)
    n = np.arange(-cutoff, cutoff + 1) + centre
    diag = 4.0 * ec * (n - ng) ** 2
    off = np.full(2 * cutoff, -0.5 * ej)
    return eigh_tridiagonal(
        diag, off, select="i", select_range=(0, n_levels - 1), eigvals_only=True
    )


def _converged(ec, ej, ng, n_levels, cutoff):
    ev = _levels(ec, ej, ng, n_levels, cutoff)
    ref = _levels(ec, ej, ng, n_levels, 2 * cutoff)
    scale = np.maximum(np.abs(ref), ec)
    return ev, float(np.max(np.abs(ev - ref) / scale))


def cpb_spectrum(ec, ej, ng=0.0, n_levels=5, cutoff=None):
    """Lowest ``n_levels`` eigen-energies (GHz, ascending) at offset charge ``ng``.

    With ``cutoff=None`` the truncation starts at ``DEFAULT_CUTOFF`` charge
    states either side and doubles until converged; an explicit ``cutoff`` is
    used as given and only checked.

    Raises
    ------
    ValueError
        For negative energies or non-positive ``ec``.
    TruncationError
        If ``cutoff < 10 + n_levels`` or doubling the cutoff moves any
        returned level by more than 1e-10 relative.
    """
    if ec <= 0 or ej < 0:
        raise ValueError(f"need ec > 0 and ej >= 0, got ec={ec}, ej={ej}")
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    auto = cutoff is None
    if auto:
        cutoff = max(DEFAULT_CUTOFF, 10 + n_levels)
    if cutoff < 10 + n_levels:
        raise TruncationError(f"cutoff={cutoff} below minimum {10 + n_levels}")
    ev, worst = _converged(ec, ej, ng, n_levels, cutoff)
    while auto and worst > CONVERGENCE_RTOL and cutoff < MAX_AUTO_CUTOFF:
        cutoff *= 2
        ev, worst = _converged(ec, ej, ng, n_levels, cutoff)
    if worst > CONVERGENCE_RTOL:
        raise TruncationError(
            f"spectrum not converged at cutoff={cutoff} (relative change {worst:.2e})"
        )
    return ev


def transition_frequency(ec, ej, ng, i, j, cutoff=None):
    """E_j - E_i in GHz at offset charge ``ng``."""
    if not j > i >= 0:
        raise ValueError(f"need j > i >= 0, got i={i}, j={j}")
    ev = cpb_spectrum(ec, ej, ng, n_levels=j + 1, cutoff=cutoff)
    return float(ev[j] - ev[i])


def parity_splitting(ec, ej, i, j, ng=DEFAULT_NG_BIAS, cutoff=None, signed=False):
    """Difference of the i->j transition between the two parity branches.

    The odd branch is the even branch displaced by half a Cooper pair, so the
    splitting is ``f(ng) - f(ng + 1/2)``. It vanishes at ``ng = 1/4``.
    """
    s = transition_frequency(ec, ej, ng, i, j, cutoff) - transition_frequency(
        ec, ej, ng + 0.5, i, j, cutoff
    )
    return s if signed else abs(s)


def charge_dispersion(ec, ej, m, ng_bias=DEFAULT_NG_BIAS, cutoff=None):
    """Peak-to-peak dispersion of level ``m`` and the 0-1 / 1-2 parity beats."""
    if m < 0:
        raise ValueError("level index must be >= 0")
    n_levels = max(m + 1, 3)
    lo = cpb_spectrum(ec, ej, 0.0, n_levels, cutoff)
    hi = cpb_spectrum(ec, ej, 0.5, n_levels, cutoff)
    return ChargeDispersion(
        level=m,
        epsilon=float(abs(hi[m] - lo[m])),
        beat_01=parity_splitting(ec, ej, 0, 1, ng_bias, cutoff),
        beat_12=parity_splitting(ec, ej, 1, 2, ng_bias, cutoff),
        ng_bias=ng_bias,
    )
