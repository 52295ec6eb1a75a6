"""File formats: parity traces, PSDs, sweeps, device tables, JSON reports.

Floats are written with ``repr`` so every text format round-trips exactly.
All writers go through :func:`atomic_write` (temporary file, then rename).
"""

import csv
import io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .paritysim import DiscardReason, ParityTrace
from .records import DESIGNS, DeviceRecord, Material, QubitDesign, TemperatureSweep
from .spectral import PsdEstimate

DEVICE_COLUMNS = [
    "device_id", "material", "design", "style", "gap_um", "paddle_w_um",
    "paddle_h_um", "f01_ghz", "t1_us", "qpt_rate_hz", "re_y_norm",
]
SWEEP_COLUMNS = ["t_mk", "gamma_qp_hz", "gamma_err_hz"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def _current_umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


_UMASK = _current_umask()


def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    return atomic_write(path, dumps(obj))


def schema(name: str) -> dict:
    """Load a shipped JSON schema by name, e.g. ``"lorentzian_fit"``."""
    text = resources.files("qptprobe").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


# -- parity traces ----------------------------------------------------------

def trace_to_text(trace: ParityTrace) -> str:
    lines = [
        f"# dt={trace.dt!r} seed={int(trace.seed)} discarded={'true' if trace.discarded else 'false'}",
        f"# discard_reason={trace.discard_reason.value}",
        "# meta=" + json.dumps(_jsonable(trace.meta), sort_keys=True),
    ]
    body = "\n".join("+1" if v > 0 else "-1" for v in trace.values.tolist())
    return "\n".join(lines) + "\n" + body + "\n"


def trace_from_text(text: str) -> ParityTrace:
    header = {}
    meta = {}
    values = []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta="):
                meta = json.loads(body[5:])
                continue
            for tok in body.split():
                k, _, v = tok.partition("=")
                header[k] = v
        elif line.strip():
            values.append(int(line))
    try:
        dt = float(header["dt"])
        seed = int(header["seed"])
        discarded = {"true": True, "false": False}[header["discarded"]]
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad trace header: {exc}") from exc
    return ParityTrace(
        values=np.array(values, dtype=np.int8),
        dt=dt,
        discarded=discarded,
        discard_reason=DiscardReason(header.get("discard_reason", "None")),
        seed=seed,
        meta=meta,
    )


def trace_to_json(trace: ParityTrace) -> str:
    doc = {
        "dt": trace.dt,
        "seed": int(trace.seed),
        "discarded": trace.discarded,
        "discard_reason": trace.discard_reason.value,
        "values": trace.values.tolist(),
        "meta": trace.meta,
    }
    if trace.true_values is not None:
        doc["true_values"] = trace.true_values.tolist()
    return dumps(doc)


def trace_from_json(text: str) -> ParityTrace:
    doc = json.loads(text)
    tv = doc.get("true_values")
    return ParityTrace(
        values=np.array(doc["values"], dtype=np.int8),
        dt=float(doc["dt"]),
        true_values=None if tv is None else np.array(tv, dtype=np.int8),
        discarded=bool(doc["discarded"]),
        discard_reason=DiscardReason(doc.get("discard_reason", "None")),
        seed=int(doc["seed"]),
        meta=doc.get("meta", {}),
    )


def write_trace(path, trace, fmt="text"):
    return atomic_write(path, trace_to_json(trace) if fmt == "json" else trace_to_text(trace))


def read_trace(path) -> ParityTrace:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return trace_from_json(text)
    return trace_from_text(text)


# -- PSDs -------------------------------------------------------------------

def psd_to_text(psd: PsdEstimate) -> str:
    head = f"# dt={psd.dt!r} n_averages={psd.n_averages}\n# meta=" + json.dumps(_jsonable(psd.meta), sort_keys=True)
    rows = "\n".join(f"{f!r} {p!r}" for f, p in zip(psd.freqs.tolist(), psd.power.tolist()))
    return head + "\n# columns: freq_hz power_per_hz\n" + rows + "\n"


def psd_from_text(text: str) -> PsdEstimate:
    header, meta, f, p = {}, {}, [], []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta="):
                meta = json.loads(body[5:])
            elif not body.startswith("columns"):
                for tok in body.split():
                    k, _, v = tok.partition("=")
                    header[k] = v
        elif line.strip():
            a, b = line.split()
            f.append(float(a))
            p.append(float(b))
    return PsdEstimate(np.array(f), np.array(p), int(header["n_averages"]), float(header["dt"]), meta)


def write_columns(path, x, y, header=""):
    """Plot-ready two-column text."""
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"{a!r} {b!r}" for a, b in zip(np.asarray(x, float).tolist(), np.asarray(y, float).tolist())]
    return atomic_write(path, "\n".join(lines) + "\n")


# -- sweeps -----------------------------------------------------------------

def sweep_to_csv(sweep: TemperatureSweep) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    errs = sweep.gamma_err if sweep.gamma_err is not None else [None] * len(sweep)
    for t, g, e in zip(sweep.t_mk.tolist(), sweep.gamma_qp.tolist(), list(errs)):
        w.writerow([repr(t), repr(g), "" if e is None else repr(float(e))])
    return buf.getvalue()


def sweep_from_csv(text: str) -> TemperatureSweep:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise DataError("empty sweep file")
    missing = {"t_mk", "gamma_qp_hz"} - set(rows[0])
    if missing:
        raise DataError(f"sweep file missing columns {sorted(missing)}")
    try:
        t = [float(r["t_mk"]) for r in rows]
        g = [float(r["gamma_qp_hz"]) for r in rows]
        e = [r.get("gamma_err_hz") or "" for r in rows]
        errs = None if all(x == "" for x in e) else [float(x) for x in e]
        return TemperatureSweep(t, g, errs)
    except ValueError as exc:
        raise DataError(f"bad sweep data: {exc}") from exc


def read_sweep(path) -> TemperatureSweep:
    return sweep_from_csv(Path(path).read_text(encoding="utf-8"))


def write_sweep(path, sweep):
    return atomic_write(path, sweep_to_csv(sweep))


# -- device tables ----------------------------------------------------------

def devices_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DEVICE_COLUMNS)
    for r in records:
        d = r.design
        w.writerow([
            r.device_id, r.material.value, d.name, d.style.value, repr(float(d.gap_um)),
            repr(float(d.paddle_w_um)), repr(float(d.paddle_h_um)), repr(float(r.f01)),
            repr(float(r.t1)), repr(float(r.qpt_rate)), "" if r.re_y is None else repr(float(r.re_y)),
        ])
    return buf.getvalue()


def devices_from_csv(text: str, sweeps_dir=None):
    """Parse a device table.

    Returns ``(records, errors)``; rows with unknown materials or designs,
    bad numbers or duplicate ``device_id`` are skipped and reported.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise DataError("device table is empty")
    missing = set(DEVICE_COLUMNS) - set(reader.fieldnames)
    if missing:
        raise DataError(f"device table missing columns {sorted(missing)}")
    records, errors, seen = [], [], set()
    for lineno, row in enumerate(reader, start=2):
        dev = row["device_id"]
        try:
            if dev in seen:
                raise DataError(f"duplicate device_id {dev!r}")
            if row["design"] not in DESIGNS:
                raise DataError(f"unknown design {row['design']!r}")
            try:
                material = Material(row["material"])
            except ValueError:
                raise DataError(f"unknown material {row['material']!r}") from None
            design = DESIGNS[row["design"]]
            given = QubitDesign(
                row["design"], row["style"], float(row["gap_um"]),
                float(row["paddle_w_um"]), float(row["paddle_h_um"]),
            )
            if given != design:
                raise DataError(f"geometry or style of {dev!r} disagrees with design {design.name}")
            re_y = float(row["re_y_norm"]) if row["re_y_norm"] not in ("", None) else None
            sweep = None
            if sweeps_dir is not None:
                sp = Path(sweeps_dir) / f"{dev}.csv"
                if sp.exists():
                    sweep = read_sweep(sp)
            rec = DeviceRecord(
                dev, material, design, float(row["f01_ghz"]), float(row["t1_us"]),
                float(row["qpt_rate_hz"]), re_y=re_y, sweep=sweep,
            )
        except (ValueError, KeyError, TypeError) as exc:
            errors.append({"line": lineno, "device_id": dev, "error": str(exc)})
            continue
        seen.add(dev)
        records.append(rec)
    return records, errors


def read_devices(path, sweeps_dir=None):
    return devices_from_csv(Path(path).read_text(encoding="utf-8"), sweeps_dir)
