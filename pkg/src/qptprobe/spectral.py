"""Power spectral density of parity traces and Lorentzian rate extraction.

The PSD is one-sided and computed from the ±1 parity sequence itself (not
from a list of switching events). For a random telegraph signal switching
at mean rate ``gamma`` the one-sided spectrum is

    S(f) = 2 * 4 gamma / ((2 gamma)^2 + (2 pi f)^2)

so ``fit_lorentzian`` uses ``S(f) = a * 2 * L(f) + c`` with
``L(f) = 4 gamma / ((2 gamma)^2 + (2 pi f)^2)``. The amplitude ``a`` is the
squared mapping contrast and ``c`` the white floor from mapping errors.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .paritysim import ParityTrace

PSD_CONVENTION = "one-sided PSD of the +/-1 parity sequence"
MIN_SEGMENT = 8
MIN_FIT_BINS = 16


class FitError(RuntimeError):
    """Least-squares fit failed; ``diagnostics`` carries solver details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Window(str, enum.Enum):
    RECTANGULAR = "Rectangular"
    HANN = "Hann"


@dataclass
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray
    n_averages: int
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must have equal length")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(self.power < 0):
            raise ValueError("power must be non-negative")

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass
class LorentzianFit:
    gamma: float
    amplitude: float
    floor: float
    gamma_err: float
    chi2_reduced: float
    amplitude_err: float = float("nan")
    floor_err: float = float("nan")
    at_bound: bool = False
    n_iterations: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "gamma_err": self.gamma_err,
            "amplitude": self.amplitude,
            "amplitude_err": self.amplitude_err,
            "floor": self.floor,
            "floor_err": self.floor_err,
            "chi2_reduced": self.chi2_reduced,
            "at_bound": self.at_bound,
            "n_iterations": self.n_iterations,
            **self.meta,
        }


def estimate_psd(trace: ParityTrace, segment_length: int, window=Window.RECTANGULAR) -> PsdEstimate:
    """Welch average of non-overlapping segment periodograms.

    With the rectangular window ``sum(power) * df`` equals the mean square
    of the trace (Parseval). Trailing samples that do not fill a segment are
    dropped.
    """
    if trace.discarded:
        raise ValueError(f"trace discarded ({trace.discard_reason.value}); not eligible for PSD")
    window = Window(window)
    n = len(trace)
    if segment_length < MIN_SEGMENT:
        raise ValueError(f"segment_length must be >= {MIN_SEGMENT}")
    if segment_length > n:
        raise ValueError("segment_length exceeds trace length")
    k = n // segment_length
    x = trace.values[: k * segment_length].astype(float).reshape(k, segment_length)
    if window is Window.HANN:
        w = np.hanning(segment_length + 1)[:-1]
    else:
        w = np.ones(segment_length)
    spec = np.abs(np.fft.rfft(x * w, axis=1)) ** 2
    # one-sided: double everything except DC and (for even length) Nyquist
    spec[:, 1 : (segment_length + 1) // 2] *= 2.0
    power = spec.mean(axis=0) * trace.dt / np.sum(w**2)
    freqs = np.fft.rfftfreq(segment_length, trace.dt)
    return PsdEstimate(
        freqs=freqs,
        power=power,
        n_averages=k,
        dt=trace.dt,
        meta={"window": window.value, "segment_length": segment_length, "convention": PSD_CONVENTION},
    )


def average_psds(psds) -> PsdEstimate:
    """Pointwise mean of PSDs on an identical grid, weighted by their
    averaging counts; ``n_averages`` adds up."""
    psds = list(psds)
    if not psds:
        raise ValueError("nothing to average")
    ref = psds[0]
    for p in psds[1:]:
        if p.freqs.shape != ref.freqs.shape or not np.array_equal(p.freqs, ref.freqs):
            raise ValueError("frequency grids differ")
        if p.dt != ref.dt:
            raise ValueError("sampling intervals differ")
    counts = np.array([p.n_averages for p in psds], dtype=float)
    power = np.einsum("i,ij->j", counts, np.vstack([p.power for p in psds])) / counts.sum()
    return PsdEstimate(
        freqs=ref.freqs.copy(),
        power=power,
        n_averages=int(counts.sum()),
        dt=ref.dt,
        meta=dict(ref.meta),
    )


def lorentzian(f, gamma, amplitude=1.0, floor=0.0):
    """One-sided telegraph spectrum with amplitude and white floor."""
    f = np.asarray(f, dtype=float)
    return amplitude * 8.0 * gamma / (4.0 * gamma**2 + (2.0 * np.pi * f) ** 2) + floor


def _half_power_gamma(f, p):
    plateau = np.median(p[: max(3, len(p) // 50)])
    tail = np.median(p[-max(3, len(p) // 10) :])
    half = tail + 0.5 * (plateau - tail)
    idx = np.nonzero(p < half)[0]
    if len(idx) == 0:
        return None
    # roll-off frequency of the Lorentzian is gamma / pi
    return np.pi * f[idx[0]]


def log_bands(f, n_bands):
    """Start indices and sizes of contiguous groups of ``f`` falling in
    ``n_bands`` log-spaced bands (empty bands dropped)."""
    edges = np.geomspace(f[0], f[-1] * (1 + 1e-12), n_bands + 1)
    idx = np.searchsorted(edges, f, side="right") - 1
    starts = np.flatnonzero(np.r_[True, np.diff(idx) != 0])
    counts = np.diff(np.r_[starts, len(f)])
    return starts, counts


def fit_lorentzian(
    psd: PsdEstimate,
    *,
    fmax_fraction: float = 0.8,
    n_bands: int = 256,
    max_iterations: int = 50,
    tol: float = 1e-12,
) -> LorentzianFit:
    """Fit ``a * 2L(f) + c`` to the PSD, DC excluded, up to ``fmax_fraction``
    of Nyquist.

    The periodogram is averaged into ``n_bands`` log-spaced bands and the
    model is band-averaged identically. Band residuals are taken relative to
    the current model and weighted by the number of bins per band (inverse
    variance for chi-square bins); the model in the denominator is refreshed
    between bounded trust-region solves, so the estimate is unbiased.
    Standard errors use bin variance ``S^2 / n_averages``.
    """
    nyq = 0.5 / psd.dt
    sel = (psd.freqs > 0) & (psd.freqs <= fmax_fraction * nyq)
    f, p = psd.freqs[sel], psd.power[sel]
    if len(f) < MIN_FIT_BINS:
        raise ValueError(f"need >= {MIN_FIT_BINS} frequency bins, got {len(f)}")
    if psd.n_averages < 1:
        raise ValueError("n_averages must be >= 1")

    starts, counts = log_bands(f, n_bands)

    def band(v):
        return np.add.reduceat(v, starts, axis=0) / (counts if v.ndim == 1 else counts[:, None])

    duration = 1.0 / psd.df
    g_lo, g_hi = 1.0 / duration, 1.0 / psd.dt
    scale = float(np.mean(p))
    if not scale > 0:
        raise FitError("PSD is identically zero in the fit range")
    y = band(p / scale)
    fb = band(f)
    w = np.sqrt(counts.astype(float))

    g0 = _half_power_gamma(fb, y) or np.sqrt(g_lo * g_hi)
    g0 = float(np.clip(g0, g_lo * 1.01, g_hi * 0.99))
    c0 = max(float(np.median(y[-max(3, len(y) // 10) :])) * 0.5, 1e-12)
    a0 = max(float(np.median(y[: max(3, len(y) // 50)])) - c0, 1e-12) * g0 / 2.0
    x = np.array([np.log(g0), a0, c0])
    lo = np.array([np.log(g_lo), 0.0, 0.0])
    hi = np.array([np.log(g_hi), np.inf, np.inf])

    def model(q):
        return band(lorentzian(f, np.exp(q[0]), q[1], q[2]))

    def jacobian(q):
        g = np.exp(q[0])
        u = 4.0 * g**2 + (2 * np.pi * f) ** 2
        # d/d log(gamma), d/d a, d/d c
        dlog = -q[1] * 8.0 * g * (4.0 * g**2 - (2 * np.pi * f) ** 2) / u**2
        return band(np.column_stack([dlog, 8.0 * g / u, np.ones_like(f)]))

    history = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        ref = np.maximum(model(x), 1e-300)
        sol = least_squares(
            lambda q: w * (model(q) - y) / ref,
            x,
            jac=lambda q: (w / ref)[:, None] * jacobian(q),
            bounds=(lo, hi),
            method="trf",
            x_scale="jac",
            xtol=tol,
            ftol=tol,
            gtol=tol,
        )
        step = np.abs(sol.x - x) / np.maximum(np.abs(x), 1e-12)
        history.append(sol.x.tolist())
        x = sol.x
        if np.all(step < 1e-10):
            converged = True
            break
    if not converged:
        raise FitError(
            f"Lorentzian fit did not converge in {max_iterations} reweighting passes",
            {"history": history, "initial": [g0, a0, c0]},
        )

    m = model(x)
    gamma = float(np.exp(x[0]))
    jr = jacobian(x) / m[:, None]
    W = counts.astype(float)
    A = jr.T @ (W[:, None] * jr)
    # band variance m^2 / (K n_b) with weights n_b
    B = jr.T @ (W[:, None] * jr) / psd.n_averages
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Lorentzian normal matrix", {"params": x.tolist()}) from exc
    cov = Ainv @ B @ Ainv
    resid = (y - m) / m
    dof = max(len(y) - 3, 1)
    chi2 = float(np.sum(W * resid**2) * psd.n_averages / dof)
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    at_bound = bool(abs(x[0] - lo[0]) < 1e-6 or abs(x[0] - hi[0]) < 1e-6)
    return LorentzianFit(
        gamma=gamma,
        amplitude=float(x[1] * scale),
        floor=float(x[2] * scale),
        gamma_err=float(gamma * errs[0]),
        chi2_reduced=chi2,
        amplitude_err=float(errs[1] * scale),
        floor_err=float(errs[2] * scale),
        at_bound=at_bound,
        n_iterations=n_iter,
        meta={
            "convention": PSD_CONVENTION,
            "model": "a*8*gamma/((2*gamma)^2+(2*pi*f)^2)+c",
            "fmax": float(f[-1]),
            "n_bins": int(len(f)),
            "n_bands": int(len(y)),
        },
    )
