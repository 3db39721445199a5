"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import json
from pathlib import Path

import pytest

from cascade_lab import verify
from cascade_lab.cli import run

from conftest import ACCEPTANCE_LINES


def _report(number: int, title: str, checks) -> None:
    ok = all(c.passed for c in checks)
    failed = [c for c in checks if not c.passed]
    detail = "; ".join(f"{c.name} = {c.value:.6g} (bound {c.bound:.6g})" if c.value is not None
                       else c.name for c in failed)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}" + (f" [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, detail


def _suite(number, title, name):
    _report(number, title, verify.SUITES[name]())


def test_c01_degenerate():
    _suite(1, "degenerate generator exact", "degenerate")


def test_c02_martingale():
    _suite(2, "martingale mean at depths 4, 8, 12", "martingale")


def test_c03_second_moment():
    _suite(3, "variance vs exact recursion", "variance")


def test_c04_fixed_point():
    _suite(4, "pool stationarity and depth-20 agreement", "fixpoint")


def test_c05_laplace_cross_method():
    _suite(5, "iterated vs empirical Laplace transform", "laplace")


def test_c06_sandwich():
    _suite(6, "certified lower bound sandwich", "sandwich")


def test_c07_molchan():
    _suite(7, "negative-moment envelope", "molchan")


def test_c08_bootstrap():
    _suite(8, "bootstrap exponent recurrence and k0", "alpha")


def test_c09_exponent_drift():
    _suite(9, "fitted exponent drift and range", "exponent")


def test_c10_bridges():
    _suite(10, "small-deviation bridges vs empirical cdf", "bridges")


def test_c11_chaos_kernel():
    _suite(11, "chaos kernel and factorized field", "chaos-cov")


def test_c12_triangles():
    _suite(12, "white-noise cone construction", "whitenoise")


def test_c13_chaos_mass():
    _suite(13, "chaos mass normalization", "chaos-mass")


def test_c14_decomposition():
    _suite(14, "scale decomposition, dominance and infimum tail", "decompose")


def _runs(d: Path):
    """One small invocation of every data-producing command, in dependency order."""
    y, emp, tab, cert = d / "y.csv", d / "emp.csv", d / "phi.csv", d / "cert.json"
    return [
        (["cascade-sample", "--spec", "lognormal:0.5", "--depth", "8", "--count", "5000",
          "--chunk-size", "700", "--seed", "1"], y),
        (["pool-run", "--spec", "lognormal:0.5", "--size", "4000", "--generations", "50",
          "--chunk-size", "900", "--seed", "2"], d / "pool.csv"),
        (["laplace-empirical", "--samples", str(y)], emp),
        (["laplace-iterate", "--spec", "lognormal:0.5", "--points", "256"], tab),
        (["exponent-fit", "--table", str(tab)], d / "fit.csv"),
        (["certify-tail", "--spec", "lognormal:0.5", "--gamma", "2"], cert),
        (["bounds-report", "--spec", "lognormal:0.5", "--table", str(tab), "--cert", str(cert),
          "--samples", str(y)], d / "bounds.csv"),
        (["smalldev", "--table", str(tab), "--samples", str(y)], d / "sd.csv"),
        (["chaos-sample", "--beta", "0.5", "--eps", "0.0625", "--n", "64", "--count", "1500",
          "--chunk-size", "200", "--seed", "3"], d / "mass.csv"),
        (["chaos-sample", "--beta", "0.5", "--eps", "0.25", "--n", "16", "--count", "600",
          "--chunk-size", "100", "--construction", "whitenoise", "--seed", "4"], d / "wn.csv"),
        (["chaos-verify-cov", "--count", "2000", "--n", "64", "--seed", "5"], d / "cov.csv"),
        (["chaos-decompose", "--eps", "0.03125", "--n", "96", "--count", "1000", "--chunk-size", "300",
          "--probe-replicates", "5000", "--seed", "6"], d / "dec.csv"),
    ]


def test_c15_reproducibility(tmp_path):
    checks = []
    for argv, out in _runs(tmp_path):
        code = run(["--workers", "1", *argv, "--out", str(out)])
        checks.append(verify.Check(f"{argv[0]} ran", code == 0))
        if code:
            continue
        manifest = str(out) + ".manifest.json"
        redo = tmp_path / "rerun" / argv[0]
        code = run(["--workers", "3", "rerun", manifest, "--out-dir", str(redo)])
        same = code == 0 and (redo / out.name).read_bytes() == out.read_bytes()
        digests = json.loads(Path(manifest).read_text())["outputs"]
        checks.append(verify.Check(f"{argv[0]} byte-identical under 3 workers ({len(digests)} files)", same))
    _report(15, "manifest replay byte-identical across worker counts", checks)
