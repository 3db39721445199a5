import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cascade_lab import chaos as C, rng as rngmod

eps_st = st.floats(1e-3, 1.0)


def test_kernel_examples():
    assert C.kernel_value(1 / 3, 1 / 3, 0.4, 0.4) == pytest.approx(math.log(3), abs=1e-15)
    assert C.kernel_value(0.1, 0.1, 0.0, 1.5) == 0.0
    for e in (1 / 3, 0.1, 0.01):
        left = C.kernel_value(e, e, 0.0, np.nextafter(e, 0))
        assert left == pytest.approx(math.log(1 / e) - 1 + e, abs=1e-14)


@given(eps_st, eps_st, st.floats(-2, 2), st.floats(-2, 2))
def test_kernel_symmetry(e1, e2, x, y):
    assert C.kernel_value(e1, e2, x, y) == C.kernel_value(e2, e1, y, x)


@given(eps_st, st.floats(0, 2))
def test_kernel_bounded_by_diagonal(e, d):
    k = C.kernel_value(e, e, 0.0, d)
    assert 0 <= k <= math.log(1 / e) + 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        C.KernelParams(1.5, 0.1)
    with pytest.raises(ValueError):
        C.KernelParams(0.5, 0.0)


def test_covariance_psd():
    cov = C.build_covariance(C.FieldGrid(64), 1 / 8)
    assert np.allclose(np.diag(cov), math.log(8))
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10 * math.log(8)


def test_factorization_failure_reported():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(C.FactorizationError):
        C.factorize(bad)


def test_eps_one_gives_zero_field():
    grid = C.FieldGrid(16)
    f = C.factorize(C.build_covariance(grid, 1.0))
    x = C.sample_field(f, np.random.default_rng(0), 3)
    assert np.all(x == 0)
    assert np.all(C.chaos_mass(x, C.KernelParams(0.5, 1.0), grid) == pytest.approx(1.0, abs=1e-15))


def test_tiny_beta_mass_is_one():
    grid = C.FieldGrid(32)
    x = C.sample_field(C.factorize(C.build_covariance(grid, 0.1)), np.random.default_rng(1))
    assert C.chaos_mass(x, C.KernelParams(1e-12, 0.1), grid) == pytest.approx(1.0, abs=1e-9)


def test_factor_sampling_moments():
    b = C.chaos_batch(C.KernelParams(0.5, 1 / 8), 128, 10_000, 2, keep_fields=True)
    assert np.all(np.abs(b.fields.var(axis=0) / math.log(8) - 1) <= 0.05)
    p = (b.fields[:, :-32] * b.fields[:, 32:]).mean(axis=1)
    assert abs(p.mean() - C.kernel_value(1 / 8, 1 / 8, 0, 0.25)) <= 3 * p.std() / 100


@pytest.mark.parametrize("beta", [0.3, 0.8])
@pytest.mark.parametrize("eps,N", [(2 ** -5, 256), (2 ** -7, 512)])
def test_mass_normalisation(beta, eps, N):
    b = C.chaos_batch(C.KernelParams(beta, eps), N, 2000, 3)
    assert abs(b.mean - 1) <= 3 * b.stderr
    assert np.all(b.masses > 0)


def test_chaos_batch_workers_identical():
    p = C.KernelParams(0.5, 1 / 16)
    a = C.chaos_batch(p, 64, 1500, 4, chunk_size=200, workers=1).masses
    b = C.chaos_batch(p, 64, 1500, 4, chunk_size=200, workers=3).masses
    assert np.array_equal(a, b)


def test_cone_area():
    lat = C.cone_lattice(0.25, [0.5], 2048)
    area = lat.cell_count(0.5) * lat.dx * lat.row_heights.mean()
    exact = sum((b - a) * lat.dx * h for (a, b), h in zip(lat.members(0.5), lat.row_heights))
    assert exact == pytest.approx(math.log(4), rel=0.01)
    assert lat.cell_count(0.5) >= 100


def test_whitenoise_variance_and_disjoint():
    X = C.whitenoise_batch(0.25, [0.5, 0.0, 1.2], 10_000, 5)
    assert abs(X[:, 0].var() / math.log(4) - 1) <= 0.05
    p = X[:, 1] * X[:, 2]
    assert abs(p.mean()) <= 3 * p.std() / 100


def test_whitenoise_too_coarse():
    with pytest.raises(ValueError):
        C.whitenoise_field(0.25, [0.5], 2, np.random.default_rng(0), rows=4)


def test_decomposition():
    d = C.decompose_scale(C.KernelParams(0.5, 2 ** -6), 192, 4000, 6)
    assert np.all(d.W0 > 0) and np.all(d.W1 > 0)
    assert np.all(d.mass >= d.recombined_coupled)
    assert d.ks_w <= 0.04
    with pytest.raises(ValueError):
        C.decompose_scale(C.KernelParams(0.5, 2 ** -6), 100, 10, 0)


def test_increment_is_scaled_field():
    # K_eps - K_{1/3} at lag d equals K_{3 eps} at lag 3 d
    d = np.linspace(0, 1 / 3, 50)
    lhs = C.kernel_value(0.01, 0.01, 0, d) - C.kernel_value(1 / 3, 1 / 3, 0, d)
    assert np.allclose(lhs, C.kernel_value(0.03, 0.03, 0, 3 * d), atol=1e-13)


def test_inf_probe():
    p = C.inf_tail_probe(0.5, replicates=20_000, master_seed=7)
    assert p.prob[0] <= 1 and np.all(np.diff(p.prob) <= 0)
    assert p.r_squared >= 0.95 and p.slope < 0
    zero = C.inf_tail_probe(0.5, a_grid=[0.0, 0.5, 1.0], replicates=2000, master_seed=7)
    assert zero.prob[0] >= 0.5
    with pytest.warns(UserWarning):
        C.inf_tail_probe(0.5, a_grid=[0.5, 1.0, 1.5, 3.0], replicates=2000, master_seed=7)
