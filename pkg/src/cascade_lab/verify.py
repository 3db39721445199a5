"""Pinned-seed verification suites.

Each suite returns a list of Check records; a suite passes when all of its
checks do.  Expensive shared inputs (the lognormal solver table, the
converged pool) are computed once per process.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import bounds, cascade, chaos, generator, laplace
from .stats import clopper_pearson, dominance_check, ks_distance

SEED = 20240611
POOL_SIZE = 100_000
POOL_GENERATIONS = 50
MOMENT_QS = (1, 2, 4)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None = None
    bound: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(self.passed)
        for k in ("value", "bound"):
            if d[k] is not None:
                d[k] = float(d[k])
        return d


def _check(name, passed, value=None, bound=None, note=""):
    return Check(name, bool(passed), None if value is None else float(value),
                 None if bound is None else float(bound), note)


def _timed(name, limit, start):
    took = time.perf_counter() - start
    return _check(f"{name} runtime (s)", took < limit, took, limit)


@lru_cache(maxsize=None)
def lognormal() -> generator.GeneratorSpec:
    return generator.make_lognormal(0.5)


@lru_cache(maxsize=None)
def lognormal_table() -> laplace.LaplaceTable:
    return laplace.iterate_phi(lognormal())


@lru_cache(maxsize=None)
def lognormal_pool() -> cascade.CascadePool:
    return cascade.pool_run(lognormal(), POOL_SIZE, POOL_GENERATIONS, SEED)


@lru_cache(maxsize=None)
def lognormal_certificate() -> generator.TailCertificate:
    return generator.certify_tail(lognormal(), "cdf-lower", 2.0)


@lru_cache(maxsize=None)
def pool_moments() -> dict:
    pool = lognormal_pool()
    return {q: cascade.neg_moment(pool, q, dominance=1.0).estimate for q in MOMENT_QS}


# -- cascade ------------------------------------------------------------------

def suite_degenerate():
    start = time.perf_counter()
    spec = generator.make_deterministic_half()
    exact = all(np.all(cascade.sample_yn_batch(spec, n, 64, SEED).values == 1.0) for n in range(21))
    out = [_check("deterministic Y_n == 1 for n <= 20", exact)]
    table = laplace.iterate_phi(spec, np.geomspace(1e-2, 1e8, 512), tol=1e-8)
    err = float(np.max(np.abs(table.phi - np.exp(-table.t))))
    out.append(_check("iterated phi vs exp(-t), sup on [1e-2, 1e8]", err <= 1e-8, err, 1e-8))
    out.append(_timed("degenerate", 10.0, start))
    return out


def suite_martingale():
    start = time.perf_counter()
    out = []
    for depth in (4, 8, 12):
        s = cascade.sample_yn_batch(lognormal(), depth, 100_000, SEED + depth)
        z = abs(s.mean - 1.0) / s.stderr
        out.append(_check(f"depth {depth}: |mean - 1| / SE", z <= 3.0, z, 3.0))
    out.append(_timed("martingale", 120.0, start))
    return out


def suite_variance():
    s = cascade.sample_yn_batch(lognormal(), 10, 100_000, SEED + 10)
    exact = cascade.variance_yn(lognormal(), 10)
    rel = abs(float(s.values.var(ddof=1)) / exact - 1.0)
    return [_check("depth 10 variance vs exact recursion (relative)", rel <= 0.10, rel, 0.10)]


def suite_fixpoint(depth_samples: int = 10_000):
    pool = lognormal_pool()
    nxt = cascade.pool_evolve(pool, 1, SEED)
    d1 = ks_distance(pool.values, nxt.values)
    exact = cascade.sample_yn_batch(lognormal(), 20, depth_samples, SEED + 20)
    d2 = ks_distance(pool.values, exact.values)
    return [
        _check("pool vs one more recombination, KS", d1 <= 0.02, d1, 0.02),
        _check("pool vs depth-20 exact samples, KS", d2 <= 0.03, d2, 0.03),
    ]


# -- laplace ------------------------------------------------------------------

def suite_laplace():
    table = lognormal_table()
    emp = laplace.empirical_phi(lognormal_pool().values, [1.0, 10.0, 100.0])
    out = []
    it = table.phi_at(emp.t)
    for t, a, b, se in zip(emp.t, it, emp.phi, emp.stderr):
        tol = max(3 * se, 1e-3)
        out.append(_check(f"t={t:g}: |iterated - empirical|", abs(a - b) <= tol, abs(a - b), tol))
    tol = table.meta["tol"]
    res = laplace.phi_residual(table, lognormal())
    out.append(_check("residual under doubled quadrature order", res <= 10 * tol, res, 10 * tol))
    return out


def suite_exponent():
    out = []
    for spec in (lognormal(), generator.make_log_weibull(1.0, 1.5)):
        gamma = generator.log_tail_exponent(spec)
        table = lognormal_table() if spec == lognormal() else laplace.iterate_phi(spec)
        lo = laplace.fit_exponent(table, (1e4, 1e6)).slope
        hi = laplace.fit_exponent(table, (1e6, 1e8)).slope
        out.append(_check(f"{spec.label()}: slope[1e6,1e8] - slope[1e4,1e6]", hi >= lo - 0.05,
                          hi - lo, -0.05))
        out.append(_check(f"{spec.label()}: slope[1e6,1e8] <= gamma + 0.2", hi <= gamma + 0.2, hi, gamma + 0.2))
        out.append(_check(f"{spec.label()}: slope[1e6,1e8] >= 1", hi >= 1.0, hi, 1.0))
    return out


# -- bounds -------------------------------------------------------------------

def suite_alpha():
    out = []
    for g in (1.5, 2.0, 3.0):
        seq = bounds.alpha_sequence(g, tol=1e-30)
        n = min(61, len(seq))
        ref = seq.closed_form_deficits()[:n]
        err = float(np.max(np.abs(seq.deficits[:n] - ref) / ref))
        out.append(_check(f"gamma={g:g}: gamma - alpha_n closed form, n <= 60 (relative)",
                          err <= 1e-12, err, 1e-12))
    seq = bounds.alpha_sequence(2.0)
    e1, e2 = abs(seq.alphas[1] - 4 / 3), abs(seq.alphas[2] - 14 / 9)
    out.append(_check("alpha_1 = 4/3 and alpha_2 = 14/9 at gamma = 2", max(e1, e2) <= 1e-15, max(e1, e2), 1e-15))
    out.append(_check("gamma = 2, tol 1e-9: length <= 60", len(seq) <= 60, len(seq), 60))
    worst = 0.0
    for c, C, a, g, t in [(1, 1, 1, 2, math.e), (2.0, 0.7, 1.3, 2.0, 1e6), (0.5, 3.0, 1.1, 1.5, 1e3)]:
        k0 = bounds.k0_optimal(c, C, a, g, t)
        d = lambda h: (bounds.f_t(k0 + h, c, C, a, g, t) - bounds.f_t(k0 - h, c, C, a, g, t)) / (2 * h)
        h = 1e-3 * k0
        deriv = (4 * d(h / 2) - d(h)) / 3  # Richardson: cancels the h^2 term
        scale = C / 2 ** a * math.log(t) ** a
        worst = max(worst, abs(deriv) / scale)
    out.append(_check("k0: finite-difference derivative of f_t (relative)", worst <= 1e-9, worst, 1e-9))
    return out


def suite_sandwich():
    start = time.perf_counter()
    rep = bounds.bound_report(lognormal_table(), lognormal_certificate(), pool_moments())
    lo_gap = float(np.min(rep.log_phi - rep.log_product))
    up_gap = float(np.min(rep.log_envelope - rep.log_phi))
    cl_gap = float(np.min(rep.log_product - rep.log_closed))
    return [
        _check(f"product bound <= phi on {rep.t.size} grid points in [x'^-2, 1e8] (min log gap)",
               rep.lower_ok.all(), lo_gap, 0.0),
        _check("closed form <= product form (min log gap)", rep.closed_ok.all(), cl_gap, 0.0),
        _check("phi <= Molchan envelope, q in {1, 2, 4} (min log gap)", rep.upper_ok.all(), up_gap, 0.0),
        _timed("sandwich", 60.0, start),
    ]


def suite_molchan():
    table = lognormal_table()
    keep = (table.t >= 1e2) & (table.t <= 1e8)
    out = []
    for q, m in pool_moments().items():
        gap = bounds.log_molchan_envelope(m, q, table.t[keep]) + table.neg_log_phi[keep]
        out.append(_check(f"q={q}: envelope >= phi on [1e2, 1e8] (min log gap)", np.all(gap >= 0),
                          gap.min(), 0.0))
    return out


def suite_bridges():
    table = lognormal_table()
    pool = lognormal_pool()
    out = []
    for x in (0.05, 0.1, 0.2, 0.3):
        ci = clopper_pearson(int(np.sum(pool.values <= x)), pool.size, 0.99)
        lo, up = bounds.smalldev_lower(table, x), bounds.smalldev_upper(table, x)
        out.append(_check(f"x={x:g}: lower bound <= CI upper", lo <= ci.upper, lo, ci.upper))
        out.append(_check(f"x={x:g}: CI lower <= e phi(1/x)", ci.lower <= up, ci.lower, up))
    return out


# -- chaos --------------------------------------------------------------------

def _lag_cov(X, lag):
    """Per-draw average of X_i X_{i+lag} over the Toeplitz diagonal; mean and SE across draws."""
    prod = (X[:, :-lag] * X[:, lag:]).mean(axis=1)
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))


def suite_chaos_cov():
    start = time.perf_counter()
    out = []
    worst = 0.0
    for e in (1 / 3, 0.1, 0.01):
        left = chaos.kernel_value(e, e, 0.0, np.nextafter(e, 0.0))
        right = chaos.kernel_value(e, e, 0.0, e)
        worst = max(worst, abs(left - right), abs(right - (math.log(1 / e) - 1 + e)))
    out.append(_check("kernel branch continuity at d = eps", worst <= 1e-12, worst, 1e-12))
    grid = chaos.FieldGrid(128)
    C = chaos.build_covariance(grid, 1 / 8)
    diag = float(np.max(np.abs(np.diag(C) - math.log(8))))
    out.append(_check("covariance diagonal = log(1/eps)", diag <= 1e-14, diag, 1e-14))
    b = chaos.chaos_batch(chaos.KernelParams(0.5, 1 / 8), 128, 10_000, SEED, keep_fields=True)
    var = b.fields.var(axis=0)
    rel = float(np.max(np.abs(var / math.log(8) - 1.0)))
    out.append(_check("per-point variance within 5% of log 8 (worst point)", rel <= 0.05, rel, 0.05))
    for lag in (16, 32):
        m, se = _lag_cov(b.fields, lag)
        k = chaos.kernel_value(1 / 8, 1 / 8, 0.0, lag / 128)
        out.append(_check(f"lag {lag / 128:g}: |cov - kernel| / SE", abs(m - k) <= 3 * se,
                          abs(m - k) / se, 3.0))
    out.append(_timed("chaos-cov", 120.0, start))
    return out


WHITENOISE_BASE = 0.2
WHITENOISE_LAGS = (0.05, 0.15, 0.3, 0.5, 0.75)


def suite_whitenoise():
    pts = np.array([WHITENOISE_BASE] + [WHITENOISE_BASE + d for d in WHITENOISE_LAGS])
    X = chaos.whitenoise_batch(0.25, pts, 10_000, SEED)
    out = []
    for j, d in enumerate(WHITENOISE_LAGS, start=1):
        p = X[:, 0] * X[:, j]
        se = float(p.std(ddof=1) / math.sqrt(p.size))
        k = chaos.kernel_value(0.25, 0.25, 0.0, d)
        gap = abs(float(p.mean()) - k)
        out.append(_check(f"lag {d:g}: |cov - kernel|", gap <= 3 * se + 0.05, gap, 3 * se + 0.05))
    return out


def suite_chaos_mass():
    start = time.perf_counter()
    out = []
    for i, beta in enumerate((0.3, 0.5, 0.8)):
        b = chaos.chaos_batch(chaos.KernelParams(beta, 2 ** -7), 512, 2000, SEED + i)
        z = abs(b.mean - 1.0) / b.stderr
        out.append(_check(f"beta={beta:g}: |mean mass - 1| / SE", z <= 3.0, z, 3.0))
    out.append(_timed("chaos-mass", 300.0, start))
    return out


def suite_decompose():
    d = chaos.decompose_scale(chaos.KernelParams(0.5, 2 ** -7), 384, 10_000, SEED)
    dom = dominance_check(d.mass, d.recombined, 0.03)
    probe = chaos.inf_tail_probe(0.5, replicates=100_000, master_seed=SEED)
    return [
        _check("W0 vs W1, KS", d.ks_w <= 0.03, d.ks_w, 0.03),
        _check("M[0,1] dominates W0 Y0 + W1 Y1 (worst gap)", dom.passed, dom.worst_gap, 0.03),
        _check("log P(inf X <= -a) vs a^2, R^2", probe.r_squared >= 0.95, probe.r_squared, 0.95),
    ]


SUITES = {
    "degenerate": suite_degenerate,
    "martingale": suite_martingale,
    "variance": suite_variance,
    "fixpoint": suite_fixpoint,
    "laplace": suite_laplace,
    "sandwich": suite_sandwich,
    "molchan": suite_molchan,
    "alpha": suite_alpha,
    "exponent": suite_exponent,
    "bridges": suite_bridges,
    "chaos-cov": suite_chaos_cov,
    "whitenoise": suite_whitenoise,
    "chaos-mass": suite_chaos_mass,
    "decompose": suite_decompose,
}


def run_suite(name: str) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    start = time.perf_counter()
    checks = SUITES[name]()
    return {
        "suite": name,
        "passed": all(c.passed for c in checks),
        "seconds": time.perf_counter() - start,
        "checks": [c.to_dict() for c in checks],
    }
