"""Population statistics across devices and designs."""

import enum
import logging
import math
from collections import defaultdict

import numpy as np
from scipy import stats

from .records import DESIGNS, DeviceRecord, Material, QubitDesign, Style, TemperatureSweep

log = logging.getLogger(__name__)

DELTA0_BAND = (183.0, 193.0)
DELTA1_BAND = (5.0, 30.0)
RATIO_TARGET = 0.1
GAMMA1_OVER_QPT = 100.0
SWITCHING_TIME_RANGE = (1e-3, 1.5)

__all__ = [
    "DESIGNS",
    "DeviceRecord",
    "QubitDesign",
    "TemperatureSweep",
    "quality_factor",
    "design_medians",
    "fit_qpt_vs_admittance",
    "fit_area_trends",
    "gap_histograms",
]


def quality_factor(f01, t1, freq_unit=1e9, time_unit=1e-6):
    """Q = 2 pi f01 T1. Defaults take f01 in GHz and T1 in microseconds."""
    if f01 <= 0 or t1 <= 0:
        raise ValueError("f01 and t1 must be positive")
    return 2.0 * math.pi * (f01 * freq_unit) * (t1 * time_unit)


def _median_iqr(x):
    x = np.asarray(x, dtype=float)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return float(med), (float(q1), float(q3))


def design_medians(records, material=None):
    """Per-design medians and interquartile ranges of QPT and 1/T1 rates.

    ``gamma1_dominates`` marks designs where the median relaxation rate is at
    least 100x the median QPT rate.
    """
    groups = defaultdict(list)
    for r in records:
        if material is None or r.material == Material(material):
            groups[r.design.name].append(r)
    out = {}
    for name in sorted(DESIGNS):
        recs = groups.get(name)
        if not recs:
            log.info("design %s has no records; omitted", name)
            continue
        qpt, qpt_iqr = _median_iqr([r.qpt_rate for r in recs])
        g1, g1_iqr = _median_iqr([r.gamma1 for r in recs])
        switching = [1.0 / r.qpt_rate for r in recs]
        out[name] = {
            "n": len(recs),
            "qpt_median": qpt,
            "qpt_iqr": qpt_iqr,
            "gamma1_median": g1,
            "gamma1_iqr": g1_iqr,
            "gamma1_dominates": g1 >= GAMMA1_OVER_QPT * qpt,
            "switching_time_range": (min(switching), max(switching)),
            "switching_in_band": SWITCHING_TIME_RANGE[0] <= min(switching)
            and max(switching) <= SWITCHING_TIME_RANGE[1],
        }
    return out


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points per group")
    if np.ptp(x) == 0:
        raise ValueError("rank-deficient group: all abscissae identical")
    res = stats.linregress(x, y)
    dof = len(x) - 2
    tcrit = stats.t.ppf(0.975, dof)
    ss_res = float(np.sum((y - res.intercept - res.slope * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {
        "slope": float(res.slope),
        "intercept": float(res.intercept),
        "r2": r2,
        "slope_err": float(res.stderr),
        "intercept_err": float(res.intercept_stderr),
        "slope_ci95": (float(res.slope - tcrit * res.stderr), float(res.slope + tcrit * res.stderr)),
        "n": len(x),
        "rss": ss_res,
    }


def fit_qpt_vs_admittance(records, group_by="style", material=None):
    """Ordinary least squares of QPT rate against normalised Re[Y] per
    capacitor style, with the slope contrast between styles."""
    if group_by != "style":
        raise ValueError("only grouping by taper style is supported")
    groups = defaultdict(list)
    for r in records:
        if r.re_y is not None and (material is None or r.material == Material(material)):
            groups[r.design.style].append(r)
    out = {}
    for style in Style:
        recs = groups.get(style, [])
        if not recs:
            continue
        out[style.value] = _ols([r.re_y for r in recs], [r.qpt_rate for r in recs])
    if len(out) == 2:
        t, n = out[Style.TAPERED.value], out[Style.NON_TAPERED.value]
        lo_t, hi_t = t["slope_ci95"]
        lo_n, hi_n = n["slope_ci95"]
        out["contrast"] = {
            "slope_ratio": n["slope"] / t["slope"] if t["slope"] else math.inf,
            "slope_difference": n["slope"] - t["slope"],
            "intervals_overlap": not (hi_t < lo_n or hi_n < lo_t),
        }
    return out


class TrendForm(str, enum.Enum):
    LINEAR = "Linear"
    EXPONENTIAL = "Exponential"


def fit_area_trends(designs, values, form=TrendForm.LINEAR):
    """Fit ``y = a + b * area`` or ``y = a * exp(b * area)`` versus paddle area.

    Exponential fits are linear in ``log y``; non-positive values are
    dropped and reported. ``aic`` is computed from residuals in ``y`` for
    both forms so they can be compared.
    """
    form = TrendForm(form)
    area = np.array([d.paddle_area if isinstance(d, QubitDesign) else float(d) for d in designs])
    y = np.asarray(values, dtype=float)
    if area.shape != y.shape:
        raise ValueError("designs and values differ in length")
    rejected = []
    if form is TrendForm.EXPONENTIAL:
        keep = y > 0
        rejected = np.nonzero(~keep)[0].tolist()
        area, y = area[keep], y[keep]
    if len(y) < 3:
        raise ValueError("need at least 3 usable points")
    if form is TrendForm.LINEAR:
        b, a = np.polyfit(area, y, 1)
        pred = a + b * area
    else:
        b, loga = np.polyfit(area, np.log(y), 1)
        a = math.exp(loga)
        pred = a * np.exp(b * area)
    rss = float(np.sum((y - pred) ** 2))
    n = len(y)
    aic = n * math.log(max(rss, 1e-300) / n) + 2 * 2
    return {"form": form.value, "a": float(a), "b": float(b), "rss": rss, "aic": aic, "n": n, "rejected": rejected}


def gap_histograms(fit_results, bins=10):
    """Histograms and medians of delta0 (all fits) and delta1 (fits that
    carry a subgap channel), with checks against the reference bands."""
    fit_results = list(fit_results)
    if len(fit_results) < 10:
        raise ValueError("need at least 10 fit results")
    d0 = np.array([r.delta0 for r in fit_results])
    d1 = np.array([r.delta1 for r in fit_results if r.delta1 is not None])

    def summary(x, band):
        if len(x) == 0:
            return None
        counts, edges = np.histogram(x, bins=bins)
        med, iqr = _median_iqr(x)
        return {
            "counts": counts.tolist(),
            "edges": edges.tolist(),
            "median": med,
            "iqr": iqr,
            "n": int(len(x)),
            "in_band": band[0] <= med <= band[1],
            "band": band,
        }

    out = {"delta0": summary(d0, DELTA0_BAND), "delta1": summary(d1, DELTA1_BAND)}
    if len(d1):
        paired = np.array([r.delta1 / r.delta0 for r in fit_results if r.delta1 is not None])
        ratio = float(np.median(paired))
        out["ratio_median"] = ratio
        out["ratio_near_target"] = 0.5 * RATIO_TARGET <= ratio <= 1.5 * RATIO_TARGET
    return out
