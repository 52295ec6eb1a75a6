"""Charge-parity telegraph generation and Ramsey parity-mapping simulation.

Randomness comes from counter-based Philox streams. Every trace owns the
stream keyed by ``(seed, index, purpose)`` where purpose is one of
``STREAM_TELEGRAPH``, ``STREAM_MAPPING``, ``STREAM_DRIFT`` or
``STREAM_CALIBRATION``, so traces can be generated in any order or in
parallel with identical results.
"""

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .transmon import DEFAULT_NG_BIAS, QubitParams, parity_splitting
from .units import GHZ

STREAM_TELEGRAPH = 0
STREAM_MAPPING = 1
STREAM_DRIFT = 2
STREAM_CALIBRATION = 3

DEFAULT_FS = 2000.0
DEFAULT_MAP_FIDELITY = 0.9
DEFAULT_BLOCK_LENGTH = 1.0


class CalibrationError(RuntimeError):
    """Ramsey delay or carrier calibration cannot be performed."""


class Transition(str, enum.Enum):
    ZERO_ONE = "ZeroOne"
    ONE_TWO = "OneTwo"

    @property
    def levels(self):
        return (0, 1) if self is Transition.ZERO_ONE else (1, 2)


class DiscardReason(str, enum.Enum):
    NONE = "None"
    CHARGE_DRIFT = "ChargeDrift"


def rng_stream(seed: int, index: int = 0, purpose: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, trace index, purpose)."""
    ss = np.random.SeedSequence([int(seed), int(index), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TelegraphConfig:
    gamma: float
    fs: float = DEFAULT_FS
    n_samples: int = 2**20
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if not self.fs > 0:
            raise ValueError("fs must be > 0")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def dt(self) -> float:
        return 1.0 / self.fs


@dataclass(frozen=True)
class MappingConfig:
    """Parity-to-state mapping imperfections and drift model.

    ``heralding`` selects whether a pre-sequence measurement is combined
    with the post-sequence one (parity = product of both outcomes). When on,
    residual excited population cancels but readout error enters twice.
    """

    transition: Transition = Transition.ZERO_ONE
    map_fidelity: float = DEFAULT_MAP_FIDELITY
    readout_flip: float = 0.0
    t1: float = math.inf
    ramsey_delay: float = 0.0
    drift_rate: float = 0.0
    drift_threshold: Optional[float] = None
    heralding: bool = False
    residual_excitation: float = 0.0
    block_length: float = DEFAULT_BLOCK_LENGTH
    max_delay: Optional[float] = None
    ng0: float = DEFAULT_NG_BIAS

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        for name in ("map_fidelity", "readout_flip", "residual_excitation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.t1 > 0:
            raise ValueError("t1 must be positive")
        if self.ramsey_delay < 0 or self.drift_rate < 0:
            raise ValueError("ramsey_delay and drift_rate must be >= 0")
        if self.block_length <= 0:
            raise ValueError("block_length must be positive")

    @property
    def relaxation_probability(self) -> float:
        return -math.expm1(-self.ramsey_delay / self.t1)

    @property
    def contrast(self) -> float:
        """Product of the independent symmetric error channels' contrasts."""
        c = (2.0 * self.map_fidelity - 1.0) * (1.0 - self.relaxation_probability)
        if self.heralding:
            c *= (1.0 - 2.0 * self.readout_flip) ** 2
        else:
            c *= (1.0 - 2.0 * self.readout_flip) * (1.0 - 2.0 * self.residual_excitation)
        return c

    @property
    def effective_fidelity(self) -> float:
        return 0.5 * (1.0 + self.contrast)


CONTRAST_FORMULA = (
    "F_eff = (1 + C)/2, C = (2*map_fidelity - 1) * exp(-ramsey_delay/t1) "
    "* (1 - 2*readout_flip)^k * (1 - 2*residual_excitation)^(1-k), "
    "k = 2 with heralding else 1"
)


@dataclass
class ParityTrace:
    values: np.ndarray
    dt: float
    true_values: Optional[np.ndarray] = None
    discarded: bool = False
    discard_reason: DiscardReason = DiscardReason.NONE
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        if not np.all(np.abs(self.values) == 1):
            raise ValueError("parity values must be +1 or -1")
        if self.true_values is not None:
            self.true_values = np.asarray(self.true_values, dtype=np.int8)
        self.discard_reason = DiscardReason(self.discard_reason)
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self):
        return len(self.values)

    @property
    def duration(self) -> float:
        return len(self.values) * self.dt


def flip_probability(gamma: float, dt: float) -> float:
    """Probability of an odd number of Poisson events in one sample period."""
    return -0.5 * math.expm1(-2.0 * gamma * dt)


def simulate_telegraph(cfg: TelegraphConfig) -> ParityTrace:
    """Ground-truth ±1 parity sampled every ``1/fs`` with Poisson switching."""
    rng = rng_stream(cfg.seed, cfg.index, STREAM_TELEGRAPH)
    p = flip_probability(cfg.gamma, cfg.dt)
    start = 1 if rng.random() < 0.5 else -1
    flips = rng.random(cfg.n_samples - 1) < p
    odd = np.concatenate(([0], np.cumsum(flips, dtype=np.int64) & 1))
    values = (start * (1 - 2 * odd)).astype(np.int8)
    return ParityTrace(
        values=values,
        dt=cfg.dt,
        true_values=values.copy(),
        seed=cfg.seed,
        meta={"gamma": cfg.gamma, "flip_probability": p, "index": cfg.index},
    )


def _map(values, contrast, rng):
    err = 0.5 * (1.0 - np.asarray(contrast))
    wrong = rng.random(len(values)) < err
    return np.where(wrong, -values, values).astype(np.int8)


def apply_cp_mapping(trace: ParityTrace, cfg: MappingConfig, seed: int, index: int = 0) -> ParityTrace:
    """Measured parity: each sample is correct with probability ``F_eff``."""
    rng = rng_stream(seed, index, STREAM_MAPPING)
    truth = trace.true_values if trace.true_values is not None else trace.values
    measured = _map(truth, cfg.contrast, rng)
    meta = dict(trace.meta)
    meta.update(
        effective_fidelity=cfg.effective_fidelity,
        contrast=cfg.contrast,
        composition=CONTRAST_FORMULA,
        transition=cfg.transition.value,
    )
    return ParityTrace(
        values=measured,
        dt=trace.dt,
        true_values=truth.copy(),
        discarded=trace.discarded,
        discard_reason=trace.discard_reason,
        seed=trace.seed,
        meta=meta,
    )


def beat_frequency(qubit: QubitParams, transition, ng: float = DEFAULT_NG_BIAS, signed=False) -> float:
    """Parity splitting of ``transition`` in Hz."""
    i, j = Transition(transition).levels
    return parity_splitting(qubit.ec, qubit.ej, i, j, ng=ng, signed=signed) * GHZ


def calibrate_delay(qubit: QubitParams = None, transition=Transition.ZERO_ONE, *, beat=None, ng=DEFAULT_NG_BIAS) -> float:
    """Ramsey delay giving ±pi/4 parity phase: ``1 / (4 * beat)`` seconds.

    ``beat`` (Hz) overrides the value derived from ``qubit``.
    """
    if beat is None:
        if qubit is None:
            raise ValueError("need a qubit or an explicit beat")
        beat = beat_frequency(qubit, transition, ng)
    if not beat > 0:
        raise CalibrationError(f"parity beat must be positive, got {beat!r} Hz")
    return 1.0 / (4.0 * beat)


def _drift_contrast(qubit, mapping, n, dt, seed, index):
    """Per-sample contrast factor and discard flag from offset-charge jumps."""
    rng = rng_stream(seed, index, STREAM_DRIFT)
    duration = n * dt
    n_jumps = rng.poisson(mapping.drift_rate * duration) if mapping.drift_rate > 0 else 0
    factor = np.ones(n)
    if n_jumps == 0:
        return factor, False, 0
    times = np.sort(rng.random(n_jumps)) * duration
    ngs = rng.random(n_jumps)
    s0 = beat_frequency(qubit, mapping.transition, mapping.ng0, signed=True)
    threshold = mapping.drift_threshold if mapping.drift_threshold is not None else 0.1 * abs(s0)
    drifted = False
    starts = np.minimum((times / dt).astype(np.int64), n)
    for k, (i0, ng) in enumerate(zip(starts, ngs)):
        s = beat_frequency(qubit, mapping.transition, ng, signed=True)
        if abs(abs(s) - abs(s0)) > threshold:
            drifted = True
        i1 = starts[k + 1] if k + 1 < n_jumps else n
        # calibrated phase pi/4 rescales with the splitting; sign flips the mapping
        factor[i0:i1] = math.sin(0.5 * math.pi * s / s0)
    return factor, drifted, n_jumps


def simulate_protocol_run(
    qubit: QubitParams,
    tele: TelegraphConfig,
    mapping: MappingConfig,
    *,
    mapping_seed: Optional[int] = None,
) -> ParityTrace:
    """End-to-end measured trace: telegraph, delay calibration, drift, mapping.

    The Ramsey delay is calibrated on the beat of ``mapping.transition`` at
    ``mapping.ng0``; the configured ``ramsey_delay`` is replaced. Runs in
    which an offset-charge jump moves the splitting by more than
    ``drift_threshold`` (Hz; default 10 % of the calibrated beat) are
    flagged as discarded.
    """
    beat = beat_frequency(qubit, mapping.transition, mapping.ng0)
    max_delay = mapping.max_delay if mapping.max_delay is not None else tele.dt
    if beat * max_delay < 0.25:
        raise CalibrationError(
            f"beat {beat:.4g} Hz unresolvable: needs delay {1 / (4 * beat):.3g} s > max {max_delay:.3g} s"
        )
    delay = calibrate_delay(beat=beat)
    mapping = dataclasses.replace(mapping, ramsey_delay=delay)
    truth = simulate_telegraph(tele)
    n = len(truth)
    factor, drifted, n_jumps = _drift_contrast(qubit, mapping, n, tele.dt, tele.seed, tele.index)
    seed = tele.seed if mapping_seed is None else mapping_seed
    rng = rng_stream(seed, tele.index, STREAM_MAPPING)
    measured = _map(truth.values, mapping.contrast * factor, rng)
    meta = dict(truth.meta)
    meta.update(
        transition=mapping.transition.value,
        beat_hz=beat,
        ramsey_delay=delay,
        effective_fidelity=mapping.effective_fidelity,
        contrast=mapping.contrast,
        composition=CONTRAST_FORMULA,
        heralding=mapping.heralding,
        ng_bias=mapping.ng0,
        drift_jumps=int(n_jumps),
    )
    return ParityTrace(
        values=measured,
        dt=tele.dt,
        true_values=truth.values,
        discarded=drifted,
        discard_reason=DiscardReason.CHARGE_DRIFT if drifted else DiscardReason.NONE,
        seed=tele.seed,
        meta=meta,
    )


def simulate_protocol_blocks(qubit, tele: TelegraphConfig, mapping: MappingConfig, n_blocks: int):
    """Independent sampling sequences of ``mapping.block_length`` seconds each.

    Block ``k`` uses trace index ``tele.index + k``; ``tele.n_samples`` is
    ignored.
    """
    n = max(2, int(round(mapping.block_length * tele.fs)))
    return [
        simulate_protocol_run(
            qubit, dataclasses.replace(tele, n_samples=n, index=tele.index + k), mapping
        )
        for k in range(n_blocks)
    ]


def _fringe(tau, f1, f2):
    return 0.5 + 0.25 * np.cos(2 * np.pi * f1 * tau) + 0.25 * np.cos(2 * np.pi * f2 * tau)


def _two_tone_fit(tau, y, f1, f2):
    def design(freqs):
        cols = [np.ones_like(tau)]
        for f in freqs:
            cols += [np.cos(2 * np.pi * f * tau), np.sin(2 * np.pi * f * tau)]
        return np.column_stack(cols)

    def resid(freqs):
        A = design(freqs)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return A @ coef - y

    span = tau[-1] - tau[0]
    sol = least_squares(resid, [f1, f2], x_scale=[1.0 / span] * 2, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return np.sort(sol.x)


def calibrate_carrier(
    qubit: Optional[QubitParams] = None,
    phase_ramp_rate: float = None,
    n_points: int = 400,
    seed: int = 0,
    *,
    transition=Transition.ZERO_ONE,
    beat: Optional[float] = None,
    carrier_offset: float = 0.0,
    noise: float = 0.0,
    step: Optional[float] = None,
):
    """Simulate and invert the phase-ramped Ramsey calibration fringe.

    The fringe is the parity-averaged population
    ``1/2 + 1/4 cos(2 pi f+ tau) + 1/4 cos(2 pi f- tau)`` with
    ``f± = ramp + offset ± beat/2``. Both tones are located on a
    zero-padded spectrum and refined by variable-projection least squares.

    Returns
    -------
    dict
        ``beat`` and ``carrier_offset`` estimates in Hz, plus the true values.
    """
    if beat is None:
        beat = beat_frequency(qubit, transition)
    if not beat > 0:
        raise CalibrationError("parity beat must be positive")
    if phase_ramp_rate is None:
        phase_ramp_rate = 2.0 * beat
    f_lo = phase_ramp_rate + carrier_offset - beat / 2
    f_hi = phase_ramp_rate + carrier_offset + beat / 2
    if f_lo <= 0:
        raise CalibrationError("phase ramp too slow: lower tone folds through zero")
    if step is None:
        step = 1.0 / (4.0 * f_hi)
    if f_hi * step >= 0.5:
        raise CalibrationError("delay step undersamples the upper tone")
    if n_points * step * beat <= 4:
        raise CalibrationError(
            f"tones unresolved: record spans {n_points * step * beat:.2f} beat periods (< 4)"
        )
    tau = np.arange(n_points) * step
    y = _fringe(tau, f_lo, f_hi)
    if noise > 0:
        y = y + rng_stream(seed, 0, STREAM_CALIBRATION).normal(0.0, noise, n_points)

    pad = 16 * n_points
    spec = np.abs(np.fft.rfft(y - y.mean(), pad))
    freqs = np.fft.rfftfreq(pad, step)
    peaks = [k for k in range(1, len(spec) - 1) if spec[k] >= spec[k - 1] and spec[k] > spec[k + 1]]
    if len(peaks) < 2:
        raise CalibrationError("could not resolve two calibration tones")
    top = sorted(peaks, key=lambda k: spec[k], reverse=True)[:2]
    g1, g2 = sorted(freqs[top])
    if g2 - g1 < 1.0 / (n_points * step):
        raise CalibrationError("calibration tones ambiguous (closer than resolution)")
    f1, f2 = _two_tone_fit(tau, y, g1, g2)
    return {
        "beat": float(f2 - f1),
        "carrier_offset": float(0.5 * (f1 + f2) - phase_ramp_rate),
        "true_beat": float(beat),
        "true_offset": float(carrier_offset),
        "phase_ramp_rate": float(phase_ramp_rate),
        "step": float(step),
    }
