"""``qptprobe`` command-line interface.

Every subcommand accepts ``--seed``, ``--config``, ``--out`` and
``--format``. Values resolve in the order flag, config file, built-in
default. The output directory may additionally be set through the
``QPTPROBE_OUT`` environment variable, which takes precedence over the
config file but not over ``--out``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print a JSON error document on standard error.
"""

import argparse
import contextlib
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from .cohort import design_medians, fit_area_trends, fit_qpt_vs_admittance, gap_histograms, quality_factor
from .paritysim import (
    CalibrationError,
    MappingConfig,
    TelegraphConfig,
    Transition,
    simulate_protocol_run,
)
from .qptmodel import SubgapChannel, TwoGapModelParams, gamma_total
from .records import DESIGNS, Material, Style
from .spectral import FitError, Window, average_psds, estimate_psd, fit_lorentzian, lorentzian
from .sweepfit import InsufficientDataError, ModelKind, bootstrap_uncertainty, classify_sweep
from .synthetic import DEFAULT_COHORT_SPEC, anomalous_amplitude, default_temperatures, make_cohort, simulate_sweep
from .transmon import QubitParams
from .units import GHZ, MK

ENV_OUT = "QPTPROBE_OUT"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "telegraph": {"gamma": 10.0, "fs": 2000.0, "n_samples": 2**20, "n_traces": 1},
    "mapping": {"transition": "ZeroOne", "map_fidelity": 0.9, "readout_flip": 0.0, "t1": math.inf,
                "drift_rate": 0.0, "drift_threshold": None, "heralding": False,
                "residual_excitation": 0.0, "ng0": 0.0},
    "qubit": {"ratio": 25.0, "ec": 0.3},
    "psd": {"segment_length": 2**16, "window": "Rectangular", "n_bands": 256, "fmax_fraction": 0.8},
    "sweep": {"f01": 5.0, "delta0": 190.0, "gamma_ne": 1.0, "delta1": None, "strength": 3.0,
              "noise": 0.05, "n_points": 12, "t_min": 20.0, "t_max": 250.0},
    "fit": {"f01": 5.0, "bootstrap": 0, "aic_margin": 4.0, "subgap_factor": 0.2, "t_max_mk": 100.0},
    "cohort": {},
}
TOP_LEVEL_KEYS = set(DEFAULTS) | {"seed", "out", "format"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- configuration ----------------------------------------------------------

def load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix in (".yaml", ".yml"):
            import yaml

            cfg = yaml.safe_load(text) or {}
        else:
            cfg = json.loads(text)
    except Exception as exc:  # parser-specific exception types
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a mapping")
    unknown = set(cfg) - TOP_LEVEL_KEYS
    if unknown:
        raise UsageError(f"unknown config sections {sorted(unknown)}")
    for block, values in cfg.items():
        if block in DEFAULTS and block != "cohort":
            if not isinstance(values, dict):
                raise UsageError(f"config section {block!r} must be a mapping")
            bad = set(values) - set(DEFAULTS[block])
            if bad:
                raise UsageError(f"unknown keys in {block!r}: {sorted(bad)}")
    return cfg


class Settings:
    """Resolved parameters: flag, then config, then default."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def get(self, block, key, flag=None):
        v = getattr(self.args, flag or key, None)
        if v is not None:
            return v
        if key in self.cfg.get(block, {}):
            return self.cfg[block][key]
        return DEFAULTS[block][key]

    @property
    def seed(self):
        s = self.args.seed if self.args.seed is not None else self.cfg.get("seed", 0)
        if not isinstance(s, int) or not 0 <= s < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        return s

    @property
    def out(self):
        if self.args.out is not None:
            d = self.args.out
        elif os.environ.get(ENV_OUT):
            d = os.environ[ENV_OUT]
        else:
            d = self.cfg.get("out", ".")
        return Path(d)

    def fmt(self, default="json"):
        f = self.args.format or self.cfg.get("format") or default
        if f not in ("json", "text"):
            raise UsageError(f"format must be json or text, got {f!r}")
        return f


def _existing(paths, what="input"):
    for p in paths:
        if not Path(p).is_file():
            raise qio.DataError(f"{what} file not found: {p}")


def _write_report(settings, name, doc):
    """Write a report as JSON, or as flattened ``key = value`` text."""
    out = settings.out
    if settings.fmt() == "text":
        return qio.atomic_write(out / f"{name}.txt", flatten_text(doc))
    return qio.write_json(out / f"{name}.json", doc)


def flatten_text(doc, prefix=""):
    lines = []
    doc = qio._jsonable(doc)

    def walk(v, key):
        if isinstance(v, dict):
            for k in sorted(v):
                walk(v[k], f"{key}.{k}" if key else k)
        elif isinstance(v, list) and v and any(isinstance(x, (dict, list)) for x in v):
            for i, x in enumerate(v):
                walk(x, f"{key}[{i}]")
        else:
            lines.append(f"{key} = {json.dumps(v)}")

    walk(doc, prefix)
    return "\n".join(lines) + "\n"


def _qubit(settings):
    return QubitParams.from_ratio(float(settings.get("qubit", "ratio")), ec=float(settings.get("qubit", "ec")))


# -- commands ---------------------------------------------------------------

def cmd_simulate_trace(args, settings):
    g = lambda k: settings.get("mapping", k)  # noqa: E731
    with _config_errors():
        qubit = _qubit(settings)
        mapping = _mapping(settings, g)
        tele0 = _telegraph(settings, 0)
    fmt = settings.fmt(default="text")
    n_traces = int(settings.get("telegraph", "n_traces"))
    if n_traces < 1:
        raise UsageError("n_traces must be >= 1")
    written = []
    for i in range(n_traces):
        tele = dataclasses.replace(tele0, index=i)
        trace = simulate_protocol_run(qubit, tele, mapping)
        trace.meta.update(gamma=tele.gamma, fs=tele.fs, ratio=qubit.ratio, ec_ghz=qubit.ec, index=i)
        name = f"trace_{i:04d}." + ("json" if fmt == "json" else "txt")
        qio.write_trace(settings.out / name, trace, fmt)
        written.append({"file": name, "discarded": trace.discarded, "discard_reason": trace.discard_reason.value})
    return {"command": "simulate-trace", "seed": settings.seed, "traces": written}


@contextlib.contextmanager
def _config_errors():
    """Parameter validation failures are usage errors."""
    try:
        yield
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _telegraph(settings, index):
    return TelegraphConfig(
        gamma=float(settings.get("telegraph", "gamma")),
        fs=float(settings.get("telegraph", "fs")),
        n_samples=int(settings.get("telegraph", "n_samples")),
        seed=settings.seed,
        index=index,
    )


def _mapping(settings, g):
    return MappingConfig(
        transition=Transition(settings.get("mapping", "transition")),
        map_fidelity=float(g("map_fidelity")),
        readout_flip=float(g("readout_flip")),
        t1=float(g("t1")),
        drift_rate=float(g("drift_rate")),
        drift_threshold=g("drift_threshold"),
        heralding=bool(g("heralding")),
        residual_excitation=float(g("residual_excitation")),
        ng0=float(g("ng0")),
    )


def _load_traces(paths):
    _existing(paths, "trace")
    used, discarded = [], []
    for p in paths:
        tr = qio.read_trace(p)
        if tr.discarded:
            discarded.append({"file": Path(p).name, "reason": tr.discard_reason.value})
        else:
            used.append((Path(p).name, tr))
    if not used:
        raise qio.DataError("all traces are discarded; nothing to analyse", {"discarded": discarded})
    return used, discarded


def _psd(settings, traces):
    seg = int(settings.get("psd", "segment_length"))
    window = Window(settings.get("psd", "window"))
    seg = min(seg, min(len(t) for _, t in traces))
    return average_psds([estimate_psd(t, seg, window) for _, t in traces])


def cmd_psd(args, settings):
    used, discarded = _load_traces(args.traces)
    psd = _psd(settings, used)
    if settings.fmt(default="text") == "json":
        qio.write_json(settings.out / "psd.json", {"freqs": psd.freqs, "power": psd.power,
                                                   "n_averages": psd.n_averages, "dt": psd.dt, "meta": psd.meta})
    else:
        qio.atomic_write(settings.out / "psd.txt", qio.psd_to_text(psd))
    return {"command": "psd", "used": [n for n, _ in used], "discarded": discarded}


def cmd_fit_psd(args, settings):
    used, discarded = _load_traces(args.traces)
    psd = _psd(settings, used)
    fit = fit_lorentzian(psd, n_bands=int(settings.get("psd", "n_bands")),
                         fmax_fraction=float(settings.get("psd", "fmax_fraction")))
    report = {
        "command": "fit-psd",
        "fit": fit.to_dict(),
        "n_traces": len(used),
        "n_averages": psd.n_averages,
        "segment_length": psd.meta["segment_length"],
        "window": psd.meta["window"],
        "used": [n for n, _ in used],
        "discarded": discarded,
    }
    _write_report(settings, "psd_fit", report)
    qio.atomic_write(settings.out / "psd.txt", qio.psd_to_text(psd))
    f = psd.freqs[1:]
    qio.write_columns(settings.out / "psd_model.txt", f, lorentzian(f, fit.gamma, fit.amplitude, fit.floor),
                      "freq_hz model_power_per_hz")
    return report


def cmd_simulate_sweep(args, settings):
    g = lambda k: settings.get("sweep", k)  # noqa: E731
    omega = 2 * math.pi * float(g("f01")) * GHZ
    with _config_errors():
        chans = ()
        if g("delta1") is not None:
            d1 = float(g("delta1"))
            chans = (SubgapChannel(d1, anomalous_amplitude(d1, float(g("gamma_ne")), omega, float(g("strength")))),)
        params = TwoGapModelParams(float(g("gamma_ne")), float(g("delta0")), omega, chans)
        temps = default_temperatures(int(g("n_points")), float(g("t_min")), float(g("t_max")))
    sweep = simulate_sweep(params, temps, float(g("noise")), seed=settings.seed)
    qio.write_sweep(settings.out / "sweep.csv", sweep)
    truth = {
        "seed": settings.seed,
        "f01_ghz": float(g("f01")),
        "gamma_ne": params.gamma_ne,
        "delta0_uev": params.delta0,
        "delta1_uev": chans[0].delta if chans else None,
        "amplitude": chans[0].amplitude if chans else None,
        "noise": float(g("noise")),
    }
    qio.write_json(settings.out / "sweep_truth.json", truth)
    return {"command": "simulate-sweep", "truth": truth}


def _read_sweep_checked(path):
    _existing([path], "sweep")
    return qio.read_sweep(path)


def cmd_fit_sweep(args, settings):
    sweep = _read_sweep_checked(args.sweep)
    f01 = float(settings.get("fit", "f01"))
    omega = 2 * math.pi * f01 * GHZ
    cls = classify_sweep(
        sweep,
        omega=omega,
        aic_margin=float(settings.get("fit", "aic_margin")),
        subgap_factor=float(settings.get("fit", "subgap_factor")),
        t_max_mk=float(settings.get("fit", "t_max_mk")),
    )
    n_boot = int(settings.get("fit", "bootstrap"))
    fits = {"SingleGap": cls.single, "TwoGap": cls.two}
    report = {
        "command": "fit-sweep",
        "file": Path(args.sweep).name,
        "f01_ghz": f01,
        "classification": cls.label.value,
        "evidence": cls.evidence(),
        "fits": {},
    }
    grid = np.linspace(sweep.t_mk[0], sweep.t_mk[-1], 200)
    for name, fit in fits.items():
        if fit is None:
            report["fits"][name] = None
            continue
        entry = fit.to_dict()
        if n_boot:
            b = bootstrap_uncertainty(sweep, fit.model_kind, n_resamples=n_boot, seed=settings.seed,
                                      omega=omega, fit=fit)
            entry["bootstrap"] = b.to_dict()
        report["fits"][name] = entry
        qio.write_columns(settings.out / f"sweep_curve_{name}.txt", grid, gamma_total(grid * MK, fit.params),
                          "t_mk gamma_qp_hz")
    _write_report(settings, "sweep_fit", report)
    return report


def cmd_classify(args, settings):
    omega = 2 * math.pi * float(settings.get("fit", "f01")) * GHZ
    rows = []
    for p in args.sweeps:
        sweep = _read_sweep_checked(p)
        cls = classify_sweep(sweep, omega=omega, aic_margin=float(settings.get("fit", "aic_margin")),
                             subgap_factor=float(settings.get("fit", "subgap_factor")),
                             t_max_mk=float(settings.get("fit", "t_max_mk")))
        rows.append({"file": Path(p).name, "classification": cls.label.value, **cls.evidence(),
                     "delta0": cls.best.delta0, "delta1": cls.best.delta1})
    report = {"command": "classify", "results": rows}
    _write_report(settings, "classification", report)
    return report


def cmd_make_cohort(args, settings):
    spec = dict(DEFAULT_COHORT_SPEC)
    spec.update(settings.cfg.get("cohort", {}))
    records, truth = make_cohort(settings.seed, spec)
    out = settings.out
    qio.atomic_write(out / "devices.csv", qio.devices_to_csv(records))
    for r in records:
        qio.write_sweep(out / "sweeps" / f"{r.device_id}.csv", r.sweep)
    qio.write_json(out / "ground_truth.json", truth)
    return {"command": "make-cohort", "seed": settings.seed, "n_devices": len(records)}


def _cohort_report(records, row_errors, settings):
    fit_errors, fits, per_device = [], [], {}
    for r in records:
        if r.sweep is None:
            continue
        try:
            cls = classify_sweep(r.sweep, omega=2 * math.pi * r.f01 * GHZ,
                                 aic_margin=float(settings.get("fit", "aic_margin")),
                                 subgap_factor=float(settings.get("fit", "subgap_factor")),
                                 t_max_mk=float(settings.get("fit", "t_max_mk")))
        except (InsufficientDataError, FitError, ValueError) as exc:
            fit_errors.append({"device_id": r.device_id, "error": str(exc)})
            continue
        fits.append(cls.best)
        per_device[r.device_id] = {"classification": cls.label.value, "delta0": cls.best.delta0,
                                   "delta1": cls.best.delta1, "gamma_ne": cls.best.params.gamma_ne}

    q = {r.device_id: quality_factor(r.f01, r.t1) for r in records}
    by_material = {}
    for m in Material:
        recs = [r for r in records if r.material is m]
        if not recs:
            continue
        entry = {
            "n": len(recs),
            "q_median": float(np.median([q[r.device_id] for r in recs])),
            "design_medians": design_medians(recs),
        }
        if all(r.re_y is not None for r in recs):
            try:
                entry["qpt_vs_admittance"] = fit_qpt_vs_admittance(recs)
            except ValueError as exc:
                entry["qpt_vs_admittance"] = {"error": str(exc)}
        meds = entry["design_medians"]
        names = sorted(meds)
        if len(names) >= 3:
            entry["area_trends"] = {
                form: fit_area_trends([DESIGNS[n] for n in names], [meds[n]["qpt_median"] for n in names], form)
                for form in ("Linear", "Exponential")
            }
        by_material[m.value] = entry

    all_medians = design_medians(records)
    report = {
        "command": "cohort",
        "n_devices": len(records),
        "row_errors": row_errors,
        "fit_errors": fit_errors,
        "design_medians": all_medians,
        "gamma1_dominates_all_designs": all(v["gamma1_dominates"] for v in all_medians.values()),
        "quality_factors": q,
        "materials": by_material,
        "devices": per_device,
        "gaps": gap_histograms(fits) if len(fits) >= 10 else None,
    }
    return report


def _cohort_plot_files(report, records, out):
    gaps = report["gaps"]
    if gaps:
        for key in ("delta0", "delta1"):
            h = gaps.get(key)
            if h:
                centres = 0.5 * (np.array(h["edges"][:-1]) + np.array(h["edges"][1:]))
                qio.write_columns(out / f"hist_{key}.txt", centres, h["counts"], f"{key}_uev_bin_centre count")
    names = sorted(report["design_medians"])
    qio.write_columns(out / "design_qpt_median.txt", [DESIGNS[n].paddle_area for n in names],
                      [report["design_medians"][n]["qpt_median"] for n in names], "paddle_area_um2 qpt_median_hz")
    for m in Material:
        for s in Style:
            pts = [(r.re_y, r.qpt_rate) for r in records
                   if r.material is m and r.design.style is s and r.re_y is not None]
            if pts:
                x, y = zip(*sorted(pts))
                qio.write_columns(out / f"qpt_vs_rey_{m.value}_{s.value}.txt", x, y, "re_y_norm qpt_rate_hz")


def cmd_cohort(args, settings):
    _existing([args.devices], "device table")
    sweeps_dir = args.sweeps
    if sweeps_dir is None and (Path(args.devices).parent / "sweeps").is_dir():
        sweeps_dir = Path(args.devices).parent / "sweeps"
    records, row_errors = qio.read_devices(args.devices, sweeps_dir)
    if not records:
        raise qio.DataError("device table has no valid rows", {"row_errors": row_errors})
    report = _cohort_report(records, row_errors, settings)
    _write_report(settings, "cohort_report", report)
    _cohort_plot_files(report, records, settings.out)
    return report


def cmd_report(args, settings):
    _existing(args.reports, "report")
    docs = {}
    for p in args.reports:
        try:
            docs[Path(p).name] = json.loads(Path(p).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise qio.DataError(f"{p} is not JSON: {exc}") from exc
    doc = {"command": "report", "reports": docs}
    if settings.fmt(default="text") == "text":
        qio.atomic_write(settings.out / "report.txt", flatten_text(docs))
    else:
        qio.write_json(settings.out / "report.json", doc)
    return {"command": "report", "n_reports": len(docs)}


# -- entry point ------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    common.add_argument("--config", help="JSON or YAML configuration file")
    common.add_argument("--out", help=f"output directory (env {ENV_OUT}; default .)")
    common.add_argument("--format", choices=["json", "text"], help="artifact format")

    parser = _Parser(prog="qptprobe", description="Quasiparticle-tunneling simulation and analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate-trace", parents=[common], help="simulate measured parity traces")
    p.add_argument("--gamma", type=float, help="tunneling rate, 1/s (default 10)")
    p.add_argument("--fs", type=float, help="sampling rate, Hz (default 2000)")
    p.add_argument("--n-samples", dest="n_samples", type=int, help="samples per trace (default 2^20)")
    p.add_argument("--n-traces", dest="n_traces", type=int, help="number of traces (default 1)")
    p.add_argument("--transition", choices=[t.value for t in Transition])
    p.add_argument("--map-fidelity", dest="map_fidelity", type=float)
    p.add_argument("--ratio", type=float, help="E_J/E_C (default 25)")
    p.add_argument("--ec", type=float, help="E_C in GHz (default 0.3)")
    p.set_defaults(func=cmd_simulate_trace)

    for name, func, helptext in (("psd", cmd_psd, "averaged PSD of traces"),
                                 ("fit-psd", cmd_fit_psd, "Lorentzian fit of averaged PSD")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("traces", nargs="+")
        p.add_argument("--segment-length", dest="segment_length", type=int)
        p.add_argument("--window", choices=[w.value for w in Window])
        p.set_defaults(func=func)

    p = sub.add_parser("simulate-sweep", parents=[common], help="synthetic temperature sweep")
    p.add_argument("--f01", type=float, help="GHz (default 5)")
    p.add_argument("--delta0", type=float, help="ueV (default 190)")
    p.add_argument("--gamma-ne", dest="gamma_ne", type=float, help="1/s (default 1)")
    p.add_argument("--delta1", type=float, help="subgap, ueV; omit for a single-gap sweep")
    p.add_argument("--strength", type=float, help="subgap term / gamma_ne at 60 mK (default 3)")
    p.add_argument("--noise", type=float, help="relative noise (default 0.05)")
    p.add_argument("--n-points", dest="n_points", type=int)
    p.set_defaults(func=cmd_simulate_sweep)

    p = sub.add_parser("fit-sweep", parents=[common], help="fit and classify one sweep")
    p.add_argument("sweep")
    p.add_argument("--f01", type=float, help="GHz (default 5)")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicas (>= 100; default off)")
    p.set_defaults(func=cmd_fit_sweep)

    p = sub.add_parser("classify", parents=[common], help="classify sweeps")
    p.add_argument("sweeps", nargs="+")
    p.add_argument("--f01", type=float)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("make-cohort", parents=[common], help="write a synthetic cohort with ground truth")
    p.set_defaults(func=cmd_make_cohort)

    p = sub.add_parser("cohort", parents=[common], help="cohort statistics report")
    p.add_argument("devices")
    p.add_argument("--sweeps", help="directory of <device_id>.csv sweeps (default: sibling 'sweeps')")
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("report", parents=[common], help="combine JSON reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code, kind, message, diagnostics=None):
    doc = {"error": {"code": code, "kind": kind, "message": message, "diagnostics": diagnostics or {}}}
    sys.stderr.write(qio.dumps(doc))
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = Settings(args, load_config(args.config))
        settings.seed  # validate before any work
        settings.fmt()
        args.func(args, settings)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (FitError, CalibrationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc), getattr(exc, "diagnostics", None))
    except (qio.DataError, InsufficientDataError, ValueError, KeyError, OSError) as exc:
        return _fail(EXIT_DATA, "data", str(exc), getattr(exc, "diagnostics", None))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
