import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst

from cascade_lab.stats import (Ecdf, clopper_pearson, dominance_check, ks_critical, ks_distance,
                               loglog_fit)

samples = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60)


@given(samples)
def test_ecdf_shape(xs):
    F = Ecdf(xs)
    grid = np.sort(np.concatenate([xs, [min(xs) - 1, max(xs) + 1]]))
    v = F(grid)
    assert v[0] == 0 and v[-1] == 1
    assert np.all(np.diff(v) >= 0)
    assert F(max(xs)) == 1.0


@given(samples, samples)
def test_ks_symmetric_and_matches_scipy(a, b):
    d = ks_distance(a, b)
    assert d == ks_distance(b, a)
    assert 0 <= d <= 1
    assert d == pytest.approx(sst.ks_2samp(a, b).statistic, abs=1e-12)


@given(samples, samples, samples)
def test_ks_triangle(a, b, c):
    assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12


@given(samples, st.randoms(use_true_random=False))
def test_permutation_invariance(a, r):
    b = list(a)
    r.shuffle(b)
    assert ks_distance(a, [0.0]) == ks_distance(b, [0.0])
    assert dominance_check(a, b).worst_gap == 0.0


def test_ks_trivial():
    assert ks_distance([1, 2, 3], [1, 2, 3]) == 0
    assert ks_distance([0], [1]) == 1


def test_ks_same_law_below_critical():
    rng = np.random.default_rng(0)
    a, b = rng.lognormal(size=100_000), rng.lognormal(size=100_000)
    assert ks_distance(a, b) <= 0.01
    assert ks_critical(100_000, 100_000) == pytest.approx(1.6276 * np.sqrt(2e-5), rel=1e-3)


def test_clopper_pearson_endpoints():
    assert clopper_pearson(0, 10).lower == 0
    assert clopper_pearson(10, 10).upper == 1


def test_clopper_pearson_matches_tail_inversion():
    ci = clopper_pearson(5, 100, 0.95)
    assert ci.lower < 0.05 < ci.upper and ci.upper - ci.lower < 0.1
    # at the endpoints the binomial tails equal alpha/2
    assert sst.binom.sf(4, 100, ci.lower) == pytest.approx(0.025, rel=1e-6)
    assert sst.binom.cdf(5, 100, ci.upper) == pytest.approx(0.025, rel=1e-6)


def test_clopper_pearson_coverage():
    rng = np.random.default_rng(3)
    ks = rng.binomial(1000, 0.03, size=10_000)
    cover = np.mean([clopper_pearson(int(k), 1000).lower <= 0.03 <= clopper_pearson(int(k), 1000).upper
                     for k in ks])
    assert 0.94 <= cover <= 0.97  # exact intervals are conservative


@given(st.integers(0, 200), st.integers(1, 200))
def test_clopper_pearson_contains_estimate(k, n):
    k = min(k, n)
    ci = clopper_pearson(k, n)
    assert 0 <= ci.lower <= k / n <= ci.upper <= 1


def test_loglog_exact_power():
    t = np.geomspace(1e2, 1e8, 30)
    fit = loglog_fit(t, neg_log=np.log(t) ** 1.7)
    assert fit.slope == pytest.approx(1.7, abs=1e-12)
    assert fit.residual_norm < 1e-12


def test_loglog_noise():
    rng = np.random.default_rng(5)
    t = np.geomspace(1e2, 1e8, 50)
    nl = np.exp(1.7 * np.log(np.log(t)) + 1e-3 * rng.standard_normal(50))
    assert abs(loglog_fit(t, neg_log=nl).slope - 1.7) < 0.05


def test_loglog_rejects():
    t = np.geomspace(1e2, 1e8, 10)
    with pytest.raises(ValueError):
        loglog_fit(t[:1], values=[0.1])
    with pytest.raises(ValueError):
        loglog_fit(t, values=np.full(10, 0.5))


def test_dominance():
    rng = np.random.default_rng(6)
    x = rng.normal(size=1000)
    assert dominance_check(x + 1, x, 0.0).passed
    assert not dominance_check(x, x + 1, 0.01).passed
    assert dominance_check(x, x, 0.0).worst_gap == 0.0
