import json
import shutil
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from qptprobe import io as qio
from qptprobe.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from qptprobe.paritysim import DiscardReason
from qptprobe.spectral import estimate_psd, fit_lorentzian

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "synthetic_cohort"


def run(*argv):
    return main([str(a) for a in argv])


def error_doc(capsys):
    doc = json.loads(capsys.readouterr().err)
    jsonschema.validate(doc, qio.schema("error"))
    return doc["error"]


def test_gamma_zero_constant_trace(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"telegraph": {"gamma": 0.0, "n_samples": 4096}, "mapping": {"map_fidelity": 1.0}}))
    assert run("simulate-trace", "--config", cfg, "--out", tmp_path) == EXIT_OK
    tr = qio.read_trace(tmp_path / "trace_0000.txt")
    assert len(tr) == 4096 and len(set(tr.values.tolist())) == 1


def test_default_pipeline_recovers_gamma(tmp_path):
    assert run("simulate-trace", "--seed", 3, "--out", tmp_path) == EXIT_OK
    assert run("fit-psd", tmp_path / "trace_0000.txt", "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "psd_fit.json").read_text())
    jsonschema.validate(report, qio.schema("psd_fit"))
    assert report["fit"]["gamma"] == pytest.approx(10.0, rel=0.05)
    for name in ("psd.txt", "psd_model.txt"):
        assert (tmp_path / name).is_file()


def test_single_trace_fit_matches_library(tmp_path):
    assert run("simulate-trace", "--n-samples", 2**17, "--gamma", 20, "--out", tmp_path) == EXIT_OK
    assert run("fit-psd", tmp_path / "trace_0000.txt", "--segment-length", 2**13, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "psd_fit.json").read_text())
    lib = fit_lorentzian(estimate_psd(qio.read_trace(tmp_path / "trace_0000.txt"), 2**13))
    assert report["fit"]["gamma"] == lib.gamma and report["fit"]["gamma_err"] == lib.gamma_err


def test_more_traces_tighter_errors(tmp_path):
    argv = ("--n-samples", 2**16, "--segment-length", 2**12)
    assert run("simulate-trace", "--n-traces", 16, *argv[:2], "--out", tmp_path) == EXIT_OK
    traces = sorted(tmp_path.glob("trace_*.txt"))
    assert len(traces) == 16
    assert run("fit-psd", traces[0], *argv[2:], "--out", tmp_path / "one") == EXIT_OK
    assert run("fit-psd", *traces, *argv[2:], "--out", tmp_path / "all") == EXIT_OK
    one = json.loads((tmp_path / "one" / "psd_fit.json").read_text())["fit"]
    many = json.loads((tmp_path / "all" / "psd_fit.json").read_text())
    assert many["n_traces"] == 16 and many["fit"]["gamma_err"] < one["gamma_err"]


def test_discarded_traces_listed_and_refused(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("telegraph:\n  n_samples: 8192\n  n_traces: 2\n")
    assert run("simulate-trace", "--config", cfg, "--out", tmp_path) == EXIT_OK
    bad = tmp_path / "trace_0001.txt"
    tr = qio.read_trace(bad)
    tr.discarded, tr.discard_reason = True, DiscardReason.CHARGE_DRIFT
    qio.write_trace(bad, tr)
    assert run("fit-psd", tmp_path / "trace_0000.txt", bad, "--segment-length", 1024, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "psd_fit.json").read_text())
    assert report["discarded"] == [{"file": "trace_0001.txt", "reason": "ChargeDrift"}]
    assert report["used"] == ["trace_0000.txt"]
    capsys.readouterr()
    assert run("fit-psd", bad, "--out", tmp_path) == EXIT_DATA
    assert "discarded" in error_doc(capsys)["message"]


@pytest.mark.parametrize("extra, label", [((), "Conventional"), (("--delta1", 20, "--strength", 10), "Anomalous")])
def test_sweep_pipeline_classifies(tmp_path, extra, label):
    assert run("simulate-sweep", "--seed", 2, *extra, "--out", tmp_path) == EXIT_OK
    assert run("fit-sweep", tmp_path / "sweep.csv", "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "sweep_fit.json").read_text())
    jsonschema.validate(report, qio.schema("sweep_fit"))
    assert report["classification"] == label
    assert (tmp_path / "sweep_curve_SingleGap.txt").is_file()


def test_classify_several(tmp_path):
    for i, extra in enumerate([(), ("--delta1", 20, "--strength", 10)]):
        assert run("simulate-sweep", "--seed", 2, *extra, "--out", tmp_path / str(i)) == EXIT_OK
    assert run("classify", tmp_path / "0" / "sweep.csv", tmp_path / "1" / "sweep.csv", "--out", tmp_path) == EXIT_OK
    rows = json.loads((tmp_path / "classification.json").read_text())["results"]
    assert [r["classification"] for r in rows] == ["Conventional", "Anomalous"]


def test_short_sweep_is_data_error(tmp_path, capsys):
    assert run("simulate-sweep", "--n-points", 3, "--out", tmp_path) == EXIT_OK
    assert run("fit-sweep", tmp_path / "sweep.csv", "--out", tmp_path) == EXIT_DATA
    err = error_doc(capsys)
    assert err["kind"] == "data" and "insufficient points" in err["message"]


def test_usage_errors(tmp_path, capsys):
    assert run("bogus") == EXIT_USAGE
    error_doc(capsys)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"telegraph": {"gamma": 1.0, "colour": "red"}}))
    assert run("simulate-trace", "--config", cfg, "--out", tmp_path) == EXIT_USAGE
    assert "colour" in error_doc(capsys)["message"]
    assert run("simulate-trace", "--gamma", -1, "--out", tmp_path) == EXIT_USAGE
    assert run("simulate-trace", "--seed", -1, "--out", tmp_path) == EXIT_USAGE
    assert run("simulate-trace", "--config", tmp_path / "missing.yaml") == EXIT_USAGE


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run("fit-sweep", tmp_path / "nope.csv", "--out", tmp_path) == EXIT_DATA
    assert "not found" in error_doc(capsys)["message"]


def test_env_var_sets_output(tmp_path, monkeypatch):
    monkeypatch.setenv("QPTPROBE_OUT", str(tmp_path / "env"))
    assert run("simulate-sweep") == EXIT_OK
    assert (tmp_path / "env" / "sweep.csv").is_file()
    assert run("simulate-sweep", "--out", tmp_path / "flag") == EXIT_OK
    assert (tmp_path / "flag" / "sweep.csv").is_file()


def test_text_format_report(tmp_path):
    assert run("simulate-sweep", "--out", tmp_path) == EXIT_OK
    assert run("fit-sweep", tmp_path / "sweep.csv", "--format", "text", "--out", tmp_path) == EXIT_OK
    text = (tmp_path / "sweep_fit.txt").read_text()
    assert 'classification = "Conventional"' in text


def test_report_combines(tmp_path):
    assert run("simulate-sweep", "--out", tmp_path) == EXIT_OK
    assert run("fit-sweep", tmp_path / "sweep.csv", "--out", tmp_path) == EXIT_OK
    assert run("report", tmp_path / "sweep_fit.json", tmp_path / "sweep_truth.json", "--out", tmp_path) == EXIT_OK
    text = (tmp_path / "report.txt").read_text()
    assert "sweep_fit.json.classification" in text and "sweep_truth.json.delta0_uev = 190.0" in text


def test_cohort_on_fixture(tmp_path):
    assert run("cohort", FIXTURE / "devices.csv", "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "cohort_report.json").read_text())
    jsonschema.validate(report, qio.schema("cohort_report"))
    truth = json.loads((FIXTURE / "ground_truth.json").read_text())
    d0_true = np.median([v["delta0_uev"] for v in truth["devices"].values()])
    assert abs(report["gaps"]["delta0"]["median"] - d0_true) <= 5
    assert report["row_errors"] == [] and report["fit_errors"] == []
    assert (tmp_path / "hist_delta0.txt").is_file()


def test_cohort_reports_duplicates(tmp_path):
    shutil.copytree(FIXTURE, tmp_path / "c")
    table = tmp_path / "c" / "devices.csv"
    lines = table.read_text().splitlines(keepends=True)
    table.write_text("".join(lines + [lines[1]]))
    assert run("cohort", table, "--out", tmp_path) == EXIT_OK
    errors = json.loads((tmp_path / "cohort_report.json").read_text())["row_errors"]
    assert len(errors) == 1 and "duplicate" in errors[0]["error"]


def test_empty_table_fails(tmp_path, capsys):
    table = tmp_path / "devices.csv"
    table.write_text(",".join(qio.DEVICE_COLUMNS) + "\n")
    assert run("cohort", table, "--out", tmp_path) == EXIT_DATA
    assert "no valid rows" in error_doc(capsys)["message"]


def test_make_cohort_deterministic(tmp_path):
    assert run("make-cohort", "--seed", 1, "--out", tmp_path) == EXIT_OK
    assert (tmp_path / "devices.csv").read_bytes() == (FIXTURE / "devices.csv").read_bytes()
    assert (tmp_path / "ground_truth.json").read_bytes() == (FIXTURE / "ground_truth.json").read_bytes()
