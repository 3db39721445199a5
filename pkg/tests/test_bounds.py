import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascade_lab import bounds as B, generator as G, laplace as L


@pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
def test_alpha_closed_form(gamma):
    seq = B.alpha_sequence(gamma, tol=1e-30)
    assert seq.max_relative_error() <= 1e-12
    assert np.all(np.diff(seq.deficits) < 0) and np.all(seq.deficits > 0)
    assert np.all(np.diff(seq.alphas) >= 0) and np.all(seq.alphas <= gamma)
    for n in (0, 1, 5, 20):
        assert seq.explicit_sum(n) == pytest.approx(seq.alphas[n], rel=1e-14)


def test_alpha_values():
    seq = B.alpha_sequence(2.0, tol=1e-9)
    assert seq.alphas[1] == pytest.approx(4 / 3, abs=1e-15)
    assert seq.alphas[2] == pytest.approx(14 / 9, abs=1e-15)
    assert len(seq) <= 60
    with pytest.raises(ValueError):
        B.alpha_sequence(1.0)


def test_f_t_by_hand():
    assert B.f_t(1, 1, 1, 1, 2, math.e) == pytest.approx(0.75)
    assert B.k0_optimal(1, 1, 1, 2, math.e) == pytest.approx(1.0)


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1.0, 1.9), st.floats(2.0, 3.0), st.floats(10, 1e12))
@settings(max_examples=50, deadline=None)
def test_k0_minimises(c, C, alpha, gamma, t):
    k0 = B.k0_optimal(c, C, alpha, gamma, t)
    f0 = B.f_t(k0, c, C, alpha, gamma, t)
    assert f0 <= B.f_t(k0 * 1.01, c, C, alpha, gamma, t)
    assert f0 <= B.f_t(k0 * 0.99, c, C, alpha, gamma, t)


def test_k0_scaling():
    c, C, a, g, t = 1.3, 0.8, 1.2, 2.5, 1e5
    ratio = B.k0_optimal(c, C, a, g, 2 * t) / B.k0_optimal(c, C, a, g, t)
    assert ratio == pytest.approx((1 + math.log(2) / math.log(t)) ** ((g - a) / (g + 1)), rel=1e-13)


def test_f_t_blows_up():
    assert B.f_t(1e-6, 1, 1, 1, 2, 100) > 1e6
    assert B.f_t(1e6, 1, 1, 1, 2, 100) > 1e6


def test_tau_deterministic():
    td = B.tau_distribution(G.make_deterministic_half(), 16.0, 5, 10, 0)
    assert td.probs[1] == 1.0 and td.probs.sum() == 1.0


@pytest.mark.parametrize("t", [1e2, 1e4, 1e6])
def test_tau_domination(t):
    td = B.tau_distribution(G.make_lognormal(0.5), t, 40, 50_000, 1)
    assert td.dominated()
    assert td.probs.sum() + td.beyond == pytest.approx(1.0)


def test_certified_bound_shape(lognormal_cert, lognormal_table):
    a = B.anchor_point(lognormal_cert)
    log_anchor = -float(lognormal_table.neg_log_phi_at(np.array([a]), conservative=True)[0])
    for t in (1e4, 1e5, 1e6, 1e7, 1e8):
        lb = B.phi_lower_certified(lognormal_cert, log_anchor, t)
        assert lb.log_closed <= lb.log_product < 0
        assert lb.log_product <= -lognormal_table.neg_log_phi_at(np.array([t]))[0]
    with pytest.raises(B.ValidityError):
        B.phi_lower_certified(lognormal_cert, log_anchor, 1e3)


def test_certified_bound_needs_lower_certificate():
    cert = G.certify_tail(G.make_log_weibull(1, 2), "cdf-upper", 2.0, x_range=(1e-12, 1e-3))
    with pytest.raises(ValueError):
        B.phi_lower_certified(cert, -1.0, 1e8)


def test_bridges_closed_form_table():
    t = np.geomspace(1e-2, 1e6, 400)
    tab = L.LaplaceTable(t, t.copy(), "iterated", meta={"interpolation": "cubic"})
    assert B.smalldev_upper(tab, 0.1) == pytest.approx(math.e * math.exp(-10), rel=1e-9)
    assert B.smalldev_lower(tab, 0.1) == 0.0
    xs = np.linspace(0.02, 0.5, 30)
    up = B.smalldev_upper(tab, xs)
    assert np.all(np.diff(up) >= 0)
    assert np.all(B.smalldev_lower(tab, xs) <= up)


def test_bridges_outside_table():
    t = np.geomspace(1e-2, 1e2, 50)
    tab = L.LaplaceTable(t, t.copy(), "iterated")
    with pytest.raises(ValueError):
        B.smalldev_lower(tab, 0.05)


def test_molchan_values():
    assert B.molchan_envelope(1.0, 1, math.e) == pytest.approx(math.exp(-2))
    t = 1e3
    env = [B.molchan_envelope(m, q, t) for q, m in [(1, 1.4), (2, 2.5), (4, 20.0)]]
    assert min(env) <= min(env[:2])
    with pytest.raises(ValueError):
        B.molchan_envelope(1.0, 0, 1.0)


def test_report(tmp_path, lognormal_table, lognormal_cert):
    rep = B.bound_report(lognormal_table, lognormal_cert, {1: 1.37, 2: 2.5, 4: 20.0})
    assert rep.all_ok
    assert rep.t[0] >= 1e4 and rep.t[-1] <= 1e8
    rep.to_csv(tmp_path / "r.csv")
    rep.to_json(tmp_path / "r.json")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head.startswith("t,product_bound,closed_bound,phi,envelope")


def test_inverse_anchor_is_not_a_bound(lognormal_table, lognormal_cert):
    """Anchoring at 1/x' overshoots phi: only the x'^-2 anchor is a proof."""
    rep = B.bound_report(lognormal_table, lognormal_cert, {1: 1.37}, anchor="inverse")
    assert not rep.lower_ok.all()
