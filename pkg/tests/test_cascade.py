import warnings

import numpy as np
import pytest

from cascade_lab import cascade, generator as G
from cascade_lab.stats import ks_distance


def test_depth_cap():
    with pytest.raises(cascade.DepthError):
        cascade.sample_yn_batch(G.make_lognormal(0.5), 31, 1, 0)
    with pytest.raises(cascade.DepthError):
        cascade.sample_yn_batch(G.make_lognormal(0.5), -1, 1, 0)


def test_injected_weight_count_checked():
    with pytest.raises(ValueError):
        cascade.sample_yn(G.make_lognormal(0.5), 3, weights=np.ones(5))


def test_deterministic_exact_to_depth_20():
    s = G.make_deterministic_half()
    for n in range(21):
        assert np.all(cascade.sample_yn_batch(s, n, 3, 0).values == 1.0)


def test_batch_independent_of_workers():
    s = G.make_lognormal(0.5)
    a = cascade.sample_yn_batch(s, 6, 5000, 11, chunk_size=700, workers=1).values
    b = cascade.sample_yn_batch(s, 6, 5000, 11, chunk_size=700, workers=4).values
    assert np.array_equal(a, b)


def test_seed_changes_output():
    s = G.make_lognormal(0.5)
    a = cascade.sample_yn_batch(s, 4, 100, 1).values
    b = cascade.sample_yn_batch(s, 4, 100, 2).values
    assert not np.array_equal(a, b)


def test_second_moment_recursion_by_enumeration():
    # depth 1: Y = W0 + W1, E Y^2 = 2 E W^2 + 2 (E W)^2
    s = G.make_lognormal(0.5)
    m = cascade.second_moments(s, 1)
    assert m[1] == pytest.approx(2 * s.moment(2.0) + 0.5)


@pytest.mark.parametrize("spec", [G.make_lognormal(0.5), G.make_log_weibull(1.0, 2.0)], ids=str)
def test_martingale_mean(spec):
    s = cascade.sample_yn_batch(spec, 8, 40_000, 5)
    assert abs(s.mean - 1) <= 3 * s.stderr


def test_variance_oracle():
    spec = G.make_lognormal(0.5)
    s = cascade.sample_yn_batch(spec, 10, 100_000, 8)
    assert abs(s.values.var(ddof=1) / cascade.variance_yn(spec, 10) - 1) <= 0.1


def test_pool_mean_pinned_and_stationary(lognormal_pool):
    pool = lognormal_pool
    assert pool.values.mean() == pytest.approx(1.0, abs=1e-12)
    nxt = cascade.pool_evolve(pool, 1, 20240611)
    assert ks_distance(pool.values, nxt.values) <= 0.02


def test_pool_resumable():
    s = G.make_lognormal(0.5)
    a = cascade.pool_run(s, 2000, 5, 3)
    b = cascade.pool_evolve(cascade.pool_run(s, 2000, 3, 3), 2, 3)
    assert np.array_equal(a.values, b.values)
    assert b.generation == 5 and len(b.lineage) == 2


def test_pool_history():
    hist = []
    cascade.pool_run(G.make_lognormal(0.5), 5000, 4, 1, history=hist)
    assert [h["generation"] for h in hist] == [1, 2, 3, 4]
    assert all(abs(h["mean"] - 1) < 0.05 for h in hist)


def test_neg_moment_jackknife_and_warning():
    rng = np.random.default_rng(0)
    v = rng.lognormal(0, 0.3, 50_000)
    nm = cascade.neg_moment(v, 1.0)
    assert nm.estimate == pytest.approx(np.exp(0.045), rel=0.01)
    assert nm.stderr == pytest.approx(np.std(1 / v) / np.sqrt(v.size), rel=0.02)
    with pytest.warns(UserWarning):
        cascade.neg_moment(np.array([1.0, 1.0, 1e-3]), 2.0)
    with pytest.raises(ValueError):
        cascade.neg_moment(v, 0.0)
