"""Gap extraction from tunneling-rate temperature sweeps.

Fits are weighted least squares on ``log10(gamma)``. Free parameters are
``(log10 gamma_ne, delta0)`` for the single-gap model and
``(log10 gamma_ne, delta0, log10 A, delta1/delta0)`` for the two-gap model;
the ratio parameterisation keeps ``delta1 < delta0`` a box bound.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .paritysim import rng_stream
from .qptmodel import (
    SubgapChannel,
    TwoGapModelParams,
    gamma_total,
    log_rate_gradient,
    thermal_prefactor,
)
from .records import TemperatureSweep
from .spectral import FitError
from .units import KB, MK, UEV

MIN_POINTS = 6
STREAM_BOOTSTRAP = 4
LN10 = math.log(10.0)

LOG_GNE_BOUNDS = (-6.0, 8.0)
DELTA0_BOUNDS = (20.0, 2000.0)
LOG_A_BOUNDS = (-25.0, 10.0)
RATIO_BOUNDS = (0.005, 0.95)
RATIO_STARTS = (0.1, 0.05, 0.2, 0.35)


class ModelKind(str, enum.Enum):
    SINGLE_GAP = "SingleGap"
    TWO_GAP = "TwoGap"


class Classification(str, enum.Enum):
    CONVENTIONAL = "Conventional"
    ANOMALOUS = "Anomalous"


class InsufficientDataError(ValueError):
    pass


@dataclass
class SweepFitResult:
    params: TwoGapModelParams
    param_errors: dict
    model_kind: ModelKind
    aic: float
    chi2_reduced: float
    classification: Optional[Classification] = None
    at_bound: bool = False
    n_iterations: int = 0
    intervals: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    @property
    def delta0(self) -> float:
        return self.params.delta0

    @property
    def delta1(self) -> Optional[float]:
        return self.params.channels[0].delta if self.params.channels else None

    @property
    def amplitude(self) -> Optional[float]:
        return self.params.channels[0].amplitude if self.params.channels else None

    def values(self) -> dict:
        out = {"gamma_ne": self.params.gamma_ne, "delta0": self.params.delta0}
        if self.params.channels:
            out["amplitude"] = self.amplitude
            out["delta1"] = self.delta1
        return out

    def to_dict(self):
        return {
            "model_kind": self.model_kind.value,
            "classification": self.classification.value if self.classification else None,
            "params": self.values(),
            "param_errors": dict(self.param_errors),
            "omega": self.params.omega,
            "aic": self.aic,
            "chi2_reduced": self.chi2_reduced,
            "at_bound": self.at_bound,
            "n_iterations": self.n_iterations,
            "intervals": self.intervals,
        }


def _prepare(sweep: TemperatureSweep):
    if len(sweep) < MIN_POINTS:
        raise InsufficientDataError(f"insufficient points: {len(sweep)} < {MIN_POINTS}")
    t = sweep.t_mk * MK
    y = np.log10(sweep.gamma_qp)
    if sweep.gamma_err is not None:
        sigma = sweep.gamma_err / (sweep.gamma_qp * LN10)
        absolute = True
    else:
        sigma = np.ones_like(y)
        absolute = False
    return t, y, sigma, absolute


def _params(theta, kind, omega):
    gne = 10.0 ** theta[0]
    chans = ()
    if kind is ModelKind.TWO_GAP:
        chans = (SubgapChannel(theta[3] * theta[1], 10.0 ** theta[2]),)
    return TwoGapModelParams(gne, theta[1], omega, chans)


def _theta(params, kind):
    th = [math.log10(max(params.gamma_ne, 10 ** LOG_GNE_BOUNDS[0])), params.delta0]
    if kind is ModelKind.TWO_GAP:
        c = params.channels[0]
        th += [math.log10(c.amplitude), c.delta / params.delta0]
    return np.array(th, dtype=float)


def _bounds(kind):
    lo = [LOG_GNE_BOUNDS[0], DELTA0_BOUNDS[0]]
    hi = [LOG_GNE_BOUNDS[1], DELTA0_BOUNDS[1]]
    if kind is ModelKind.TWO_GAP:
        lo += [LOG_A_BOUNDS[0], RATIO_BOUNDS[0]]
        hi += [LOG_A_BOUNDS[1], RATIO_BOUNDS[1]]
    return np.array(lo), np.array(hi)


def model_log10(t, theta, kind, omega):
    return np.log10(gamma_total(t, _params(theta, kind, omega)))


def jac_log10(t, theta, kind, omega):
    """d log10(gamma) / d theta in the fit parameterisation."""
    p = _params(theta, kind, omega)
    g = log_rate_gradient(t, p)  # d ln gamma / d(gne, d0[, A, d1])
    cols = [g[:, 0] * p.gamma_ne, g[:, 1] / LN10]
    if kind is ModelKind.TWO_GAP:
        ratio = theta[3]
        cols[1] = (g[:, 1] + ratio * g[:, 3]) / LN10
        cols += [g[:, 2] * p.channels[0].amplitude, g[:, 3] * theta[1] / LN10]
    return np.column_stack(cols)


def _initial_single(t, rates):
    order = np.argsort(t)
    gne = float(np.median(rates[order[:3]]))
    hot = order[-max(2, len(t) // 3) :]
    excess = rates[hot] - gne
    ok = excess > 0
    delta0 = 190.0
    if ok.sum() >= 2:
        inv_kt = UEV / (KB * t[hot][ok])
        slope = np.polyfit(inv_kt, np.log(excess[ok]), 1)[0]
        if -slope > 0:
            delta0 = -slope
    delta0 = float(np.clip(delta0, DELTA0_BOUNDS[0] * 1.01, DELTA0_BOUNDS[1] * 0.99))
    return np.array([math.log10(max(gne, 1e-6)), delta0])


def _initial_amplitude(t, rates, single_theta, ratio, omega):
    base = 10.0 ** model_log10(t, single_theta, ModelKind.SINGLE_GAP, omega)
    delta1 = ratio * single_theta[1]
    kernel = thermal_prefactor(t, omega) * np.exp(-delta1 * UEV / (KB * t))
    excess = rates - base
    ok = (excess > 0) & (kernel > 0)
    if not ok.any():
        return LOG_A_BOUNDS[0] + 5.0
    a = float(np.median(excess[ok] / kernel[ok]))
    return float(np.clip(math.log10(a), LOG_A_BOUNDS[0] + 1, LOG_A_BOUNDS[1] - 1))


def _solve(t, y, sigma, kind, omega, x0):
    lo, hi = _bounds(kind)
    x0 = np.clip(x0, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))

    def resid(th):
        return (model_log10(t, th, kind, omega) - y) / sigma

    def jac(th):
        return jac_log10(t, th, kind, omega) / sigma[:, None]

    return least_squares(
        resid, x0, jac=jac, bounds=(lo, hi), method="trf", x_scale="jac",
        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000,
    )


def _errors(sol, theta, kind, absolute, chi2_red):
    J = sol.jac
    cov = np.linalg.pinv(J.T @ J)
    if not absolute:
        cov = cov * chi2_red
    errs = {
        "gamma_ne": 10.0 ** theta[0] * LN10 * math.sqrt(max(cov[0, 0], 0.0)),
        "delta0": math.sqrt(max(cov[1, 1], 0.0)),
    }
    if kind is ModelKind.TWO_GAP:
        errs["amplitude"] = 10.0 ** theta[2] * LN10 * math.sqrt(max(cov[2, 2], 0.0))
        g = np.array([theta[3], theta[1]])  # d(delta1)/d(delta0, ratio)
        sub = cov[np.ix_([1, 3], [1, 3])]
        errs["delta1"] = math.sqrt(max(float(g @ sub @ g), 0.0))
    return errs


def fit_temperature_sweep(
    sweep: TemperatureSweep,
    kind=ModelKind.SINGLE_GAP,
    qubit=None,
    *,
    omega: Optional[float] = None,
    initial: Optional[TwoGapModelParams] = None,
) -> SweepFitResult:
    """Fit one sweep with the single- or two-gap thermal model.

    ``omega`` defaults to ``qubit.omega``. Without ``initial`` the two-gap
    fit is started from the single-gap solution at several gap ratios and
    the lowest-cost solution kept.
    """
    kind = ModelKind(kind)
    if omega is None:
        if qubit is None:
            raise ValueError("need qubit or omega")
        omega = qubit.omega
    t, y, sigma, absolute = _prepare(sweep)
    n_par = 2 if kind is ModelKind.SINGLE_GAP else 4
    if len(t) <= n_par:
        raise InsufficientDataError(f"insufficient points for {kind.value}: {len(t)}")
    rates = sweep.gamma_qp

    if initial is not None:
        starts = [_theta(initial, kind)]
    else:
        single0 = _initial_single(t, rates)
        if kind is ModelKind.SINGLE_GAP:
            starts = [single0]
        else:
            s = _solve(t, y, sigma, ModelKind.SINGLE_GAP, omega, single0).x
            starts = [
                np.array([s[0], s[1], _initial_amplitude(t, rates, s, r, omega), r])
                for r in RATIO_STARTS
            ]

    best = None
    trace = []
    for x0 in starts:
        try:
            sol = _solve(t, y, sigma, kind, omega, x0)
        except (ValueError, FloatingPointError) as exc:
            trace.append({"start": x0.tolist(), "error": str(exc)})
            continue
        trace.append({"start": x0.tolist(), "end": sol.x.tolist(), "cost": float(sol.cost)})
        if sol.success and np.all(np.isfinite(sol.fun)) and (best is None or sol.cost < best.cost):
            best = sol
    if best is None:
        raise FitError(f"{kind.value} sweep fit did not converge", {"trace": trace})

    theta = best.x
    n = len(t)
    chi2 = float(np.sum(best.fun**2))
    dof = max(n - n_par, 1)
    chi2_red = chi2 / dof
    if absolute:
        aic = chi2 + 2 * n_par
    else:
        aic = n * math.log(max(chi2, 1e-300) / n) + 2 * n_par
    lo, hi = _bounds(kind)
    span = hi - lo
    pinned = (theta - lo < 1e-6 * span) | (hi - theta < 1e-6 * span)
    at_bound = bool(pinned[1] or (kind is ModelKind.TWO_GAP and pinned[3]))
    return SweepFitResult(
        params=_params(theta, kind, omega),
        param_errors=_errors(best, theta, kind, absolute, chi2_red),
        model_kind=kind,
        aic=float(aic),
        chi2_reduced=chi2_red,
        at_bound=at_bound,
        n_iterations=int(best.njev or 0),
        meta={"theta": theta.tolist(), "absolute_sigma": absolute, "trace": trace},
    )


@dataclass
class ClassificationResult:
    label: Classification
    aic_single: float
    aic_two: float
    max_subgap_ratio: float
    single: SweepFitResult
    two: Optional[SweepFitResult]

    @property
    def best(self) -> SweepFitResult:
        return self.two if self.label is Classification.ANOMALOUS else self.single

    def evidence(self):
        return {
            "aic_single": self.aic_single,
            "aic_two": self.aic_two,
            "delta_aic": self.aic_single - self.aic_two,
            "max_subgap_ratio": self.max_subgap_ratio,
        }


def subgap_to_background(fit: SweepFitResult, t_lo_k: float, t_hi_k: float, n: int = 200) -> float:
    """Largest ratio of the subgap thermal term to gamma_ne on [t_lo, t_hi]."""
    if not fit.params.channels or t_hi_k <= t_lo_k:
        return 0.0
    t = np.linspace(t_lo_k, t_hi_k, n)
    c = fit.params.channels[0]
    term = thermal_prefactor(t, fit.params.omega) * c.amplitude * np.exp(-c.delta * UEV / (KB * t))
    return float(np.max(term) / max(fit.params.gamma_ne, 1e-300))


def classify_sweep(
    sweep: TemperatureSweep,
    qubit=None,
    *,
    omega: Optional[float] = None,
    aic_margin: float = 4.0,
    subgap_factor: float = 0.2,
    t_max_mk: float = 100.0,
) -> ClassificationResult:
    """Conventional vs anomalous low-temperature behaviour.

    Anomalous iff the two-gap AIC beats the single-gap AIC by more than
    ``aic_margin`` and the fitted subgap term exceeds ``subgap_factor``
    times gamma_ne somewhere between the lowest sweep temperature and
    ``t_max_mk``.
    """
    single = fit_temperature_sweep(sweep, ModelKind.SINGLE_GAP, qubit, omega=omega)
    try:
        two = fit_temperature_sweep(sweep, ModelKind.TWO_GAP, qubit, omega=omega)
    except FitError:
        two = None
    aic_two = two.aic if two is not None else math.inf
    ratio = subgap_to_background(two, sweep.t_mk[0] * MK, t_max_mk * MK) if two else 0.0
    anomalous = aic_two < single.aic - aic_margin and ratio > subgap_factor
    label = Classification.ANOMALOUS if anomalous else Classification.CONVENTIONAL
    single.classification = label
    if two is not None:
        two.classification = label
    return ClassificationResult(label, single.aic, aic_two, ratio, single, two)


@dataclass
class BootstrapResult:
    intervals: dict
    n_resamples: int
    n_failed: int
    level: float
    warning: Optional[str] = None
    samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "intervals": {k: list(v) for k, v in self.intervals.items()},
            "n_resamples": self.n_resamples,
            "n_failed": self.n_failed,
            "level": self.level,
            "warning": self.warning,
        }


def bootstrap_uncertainty(
    sweep: TemperatureSweep,
    kind=ModelKind.SINGLE_GAP,
    qubit=None,
    n_resamples: int = 200,
    seed: int = 0,
    *,
    omega: Optional[float] = None,
    level: float = 0.95,
    fit: Optional[SweepFitResult] = None,
) -> BootstrapResult:
    """Residual-resampling bootstrap in log10 space with percentile intervals.

    Standardised residuals are divided by ``sqrt(1 - h_ii)`` (leverage),
    centred, and resampled with replacement; replica ``i`` draws from its own stream so
    results do not depend on evaluation order.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    kind = ModelKind(kind)
    if omega is None:
        omega = qubit.omega
    if fit is None:
        fit = fit_temperature_sweep(sweep, kind, omega=omega)
    t, y, sigma, _ = _prepare(sweep)
    theta = np.array(fit.meta["theta"])
    yhat = model_log10(t, theta, kind, omega)
    # leverage-adjusted, centred standardised residuals
    J = jac_log10(t, theta, kind, omega) / sigma[:, None]
    lev = np.einsum("ij,jk,ik->i", J, np.linalg.pinv(J.T @ J), J)
    std_resid = (y - yhat) / sigma / np.sqrt(np.clip(1.0 - lev, 1e-3, None))
    std_resid -= std_resid.mean()
    n = len(t)

    names = list(fit.values())
    draws = {k: [] for k in names}
    failed = 0
    for i in range(n_resamples):
        rng = rng_stream(seed, i, STREAM_BOOTSTRAP)
        y_star = yhat + sigma * rng.choice(std_resid, size=n, replace=True)
        rates = 10.0**y_star
        errs = None if sweep.gamma_err is None else sweep.gamma_err * rates / sweep.gamma_qp
        replica = TemperatureSweep(sweep.t_mk, rates, errs)
        try:
            r = fit_temperature_sweep(replica, kind, omega=omega, initial=fit.params)
        except (FitError, ValueError):
            failed += 1
            continue
        for k, v in r.values().items():
            draws[k].append(v)
    alpha = 0.5 * (1.0 - level)
    intervals = {}
    for k, v in draws.items():
        if v:
            lo, hi = np.quantile(v, [alpha, 1.0 - alpha])
            intervals[k] = (float(lo), float(hi))
    warning = None
    if failed > 0.2 * n_resamples:
        warning = f"unreliable: {failed}/{n_resamples} refits failed"
    return BootstrapResult(
        intervals=intervals,
        n_resamples=n_resamples,
        n_failed=failed,
        level=level,
        warning=warning,
        samples={k: np.array(v) for k, v in draws.items()},
    )
