import json
import logging

import numpy as np
import pytest

from cascade_lab.cli import run


def _manifest(path):
    with open(str(path) + ".manifest.json") as fh:
        return json.load(fh)


def test_version_and_help(capsys):
    assert run(["--version"]) == 0
    assert run(["--help"]) == 0
    assert "cascade-sample" in capsys.readouterr().out


def test_usage_errors_exit_1(tmp_path):
    out = str(tmp_path / "y.csv")
    assert run(["cascade-sample", "--depth", "3", "--count", "10", "--out", out]) == 1
    assert run(["cascade-sample", "--spec", "nonsense:1", "--depth", "3", "--count", "10", "--out", out]) == 1
    assert run(["cascade-sample", "--spec", "lognormal:0.5", "--depth", "3", "--count", "0", "--out", out]) == 1
    assert run(["cascade-sample", "--spec", "lognormal:0.5", "--depth", "40", "--count", "5", "--out", out]) == 1
    assert run(["no-such-command"]) == 1


def test_nonconvergence_exit_2(tmp_path):
    out = str(tmp_path / "phi.csv")
    assert run(["laplace-iterate", "--spec", "lognormal:0.5", "--max-iter", "2", "--out", out]) == 2


def test_cascade_sample_csv_and_manifest(tmp_path):
    out = tmp_path / "y.csv"
    assert run(["cascade-sample", "--spec", "lognormal:0.5", "--depth", "4", "--count", "200",
                "--seed", "3", "--out", str(out)]) == 0
    m = _manifest(out)
    assert m["schema_version"] == 1 and m["seed"] == 3 and m["command"] == "cascade-sample"
    assert list(m) == sorted(m)
    y = np.loadtxt(out, delimiter=",", skiprows=1)
    assert y.shape == (200,) and np.all(y > 0)


def test_raw_format(tmp_path):
    out = tmp_path / "y.bin"
    assert run(["cascade-sample", "--spec", "lognormal:0.5", "--depth", "2", "--count", "50",
                "--format", "raw", "--out", str(out)]) == 0
    y = np.fromfile(out, dtype="<f8")
    assert y.size == 50
    side = json.loads((tmp_path / "y.bin.json").read_text())
    assert side["count"] == 50


def test_rerun_identical_across_workers(tmp_path):
    out = tmp_path / "y.csv"
    assert run(["--workers", "1", "cascade-sample", "--spec", "log-weibull:1:2", "--depth", "6",
                "--count", "3000", "--chunk-size", "500", "--seed", "9", "--out", str(out)]) == 0
    assert run(["--workers", "4", "rerun", str(out) + ".manifest.json", "--out-dir", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "y.csv").read_bytes() == out.read_bytes()


def test_rerun_detects_tampering(tmp_path):
    out = tmp_path / "y.csv"
    assert run(["cascade-sample", "--spec", "lognormal:0.5", "--depth", "2", "--count", "20",
                "--out", str(out)]) == 0
    mpath = tmp_path / "y.csv.manifest.json"
    m = json.loads(mpath.read_text())
    m["outputs"][str(out)] = "0" * 64
    mpath.write_text(json.dumps(m))
    assert run(["rerun", str(mpath), "--out-dir", str(tmp_path / "r")]) != 0


def test_config_and_override(tmp_path, caplog):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cascade-sample": {"spec": "lognormal:0.5", "depth": 3, "count": 10}}))
    out = tmp_path / "y.csv"
    assert run(["--config", str(cfg), "cascade-sample", "--out", str(out)]) == 0
    assert _manifest(out)["params"]["depth"] == 3
    with caplog.at_level(logging.WARNING):
        assert run(["--config", str(cfg), "cascade-sample", "--depth", "5", "--out", str(out)]) == 0
    assert _manifest(out)["params"]["depth"] == 5
    assert "overrides config value" in caplog.text


def test_pipeline(tmp_path):
    """Samples -> empirical phi -> smalldev; certificate -> bounds report."""
    y = tmp_path / "y.csv"
    emp = tmp_path / "emp.csv"
    cert = tmp_path / "cert.json"
    assert run(["cascade-sample", "--spec", "log-weibull:1:2", "--depth", "8", "--count", "4000",
                "--out", str(y)]) == 0
    assert run(["laplace-empirical", "--samples", str(y), "--out", str(emp)]) == 0
    assert run(["smalldev", "--table", str(emp), "--x", "0.2", "--samples", str(y),
                "--out", str(tmp_path / "sd.csv")]) == 0
    assert run(["certify-tail", "--spec", "log-weibull:1:2", "--gamma", "2", "--out", str(cert)]) == 0
    c = json.loads(cert.read_text())
    assert c["c"] > 0 and c["fine_grid_passed"]


def test_chaos_sample_both_constructions(tmp_path):
    for construction in ("cholesky", "whitenoise"):
        out = tmp_path / f"m_{construction}.csv"
        assert run(["chaos-sample", "--beta", "0.5", "--eps", "0.125", "--n", "32", "--count", "100",
                    "--construction", construction, "--out", str(out)]) == 0
        assert out.exists()
    assert run(["chaos-sample", "--beta", "1.5", "--eps", "0.125", "--out", str(tmp_path / "x.csv")]) == 1


def test_verify_suite(capsys):
    assert run(["verify", "degenerate"]) == 0
    assert "degenerate" in capsys.readouterr().out
    assert run(["verify", "nope"]) == 1


def test_bounds_report_records_moment_source(tmp_path, lognormal_table):
    tab, cert, out = tmp_path / "phi.csv", tmp_path / "cert.json", tmp_path / "b.csv"
    lognormal_table.to_csv(tab)
    assert run(["certify-tail", "--spec", "lognormal:0.5", "--gamma", "2", "--out", str(cert)]) == 0
    assert run(["bounds-report", "--spec", "lognormal:0.5", "--table", str(tab), "--cert", str(cert),
                "--moment", "1=1.37", "--moment", "2=2.5", "--out", str(out)]) == 0
    s = _manifest(out)["summary"]
    assert s["all_ok"] and s["moments_source"] == "flags" and s["moments"] == {"1": 1.37, "2": 2.5}
    assert run(["bounds-report", "--spec", "log-weibull:1:2", "--table", str(tab), "--cert", str(cert),
                "--moment", "1=1.37", "--out", str(out)]) == 1
    assert run(["bounds-report", "--spec", "lognormal:0.5", "--table", str(tab), "--cert", str(cert),
                "--moment", "q=1", "--out", str(out)]) == 1
