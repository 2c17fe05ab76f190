import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from mdlab.curie_weiss import (MagnetizationDist, RhoMeasure, analyze_rho, cache_key,
                               condition_ii_holds, cumulants_from_moments, exact_magnetization_dist,
                               h_eval, h_prime, moments, pair_diagnostics, psi_phi,
                               site_conditional, tail_prob)
from mdlab.errors import ConditionError, StateSpaceOverflow
from mdlab.glauber import glauber_sampler
from mdlab.verify import fit_exponent
from oracles import cw_bruteforce

RAD = RhoMeasure.rademacher()
THREE = RhoMeasure.three_point()


def symmetric_rho(p, a):
    """``(1-p) delta_0 + p/2 (delta_a + delta_-a)`` rescaled to unit variance."""
    return RhoMeasure.from_unnormalized([-a, 0.0, a], [p / 2, 1 - p, p / 2], lattice_step=a)


# --- the measure ----------------------------------------------------------------

def test_rho_sorted_and_labelled():
    rho = RhoMeasure([1.0, -1.0], [0.5, 0.5])
    assert list(rho.points) == [-1.0, 1.0]
    assert rho.lattice_step == 1.0
    assert list(rho.labels) == [-1, 1]
    assert rho.L == 1.0


def test_three_point_lattice():
    assert THREE.lattice_step == pytest.approx(math.sqrt(3))
    assert list(THREE.labels) == [-1, 0, 1]


@pytest.mark.parametrize("pts,wts", [
    ([-1.0, 2.0], [0.5, 0.5]),               # asymmetric support
    ([-1.0, 1.0], [0.4, 0.6]),               # asymmetric weights
    ([-1.0, 1.0], [0.5, 0.6]),               # weights do not sum to one
    ([-2.0, 2.0], [0.5, 0.5]),               # variance 4
])
def test_rho_validation(pts, wts):
    with pytest.raises(ConditionError):
        RhoMeasure(pts, wts)


def test_non_lattice_rho_detected():
    r = math.sqrt(2)
    rho = RhoMeasure.from_unnormalized([-r, -1, 1, r], [1, 1, 1, 1])
    assert not rho.is_lattice
    with pytest.raises(ConditionError, match="lattice"):
        exact_magnetization_dist(rho, 10)


# --- cumulants ------------------------------------------------------------------

def test_rademacher_analysis():
    an = analyze_rho(RAD)
    assert an.k == 2
    assert an.h2k == pytest.approx(2.0, abs=1e-12)
    assert an.cumulants[4] == pytest.approx(-2.0, abs=1e-12)
    assert an.drift_scale == pytest.approx(2.0 / 6.0)
    assert an.lam(256) == pytest.approx(256 ** -1.5)


def test_three_point_analysis():
    an = analyze_rho(THREE)
    assert an.k == 3
    assert an.h2k == pytest.approx(6.0, abs=1e-8)
    assert abs(an.cumulants[4]) <= 1e-10
    assert an.cumulants[6] == pytest.approx(-6.0, abs=1e-8)
    m = moments(THREE, 6)
    assert m[4] == pytest.approx(3.0) and m[6] == pytest.approx(9.0)
    assert an.tau1 == pytest.approx(0.4) and an.tau2 == pytest.approx(1.4)


def test_cumulants_of_known_moments():
    # standard normal moments: cumulants vanish beyond order 2
    m = np.array([1, 0, 1, 0, 3, 0, 15, 0, 105], dtype=float)
    kappa = cumulants_from_moments(m)
    assert kappa[2] == 1.0
    assert np.allclose(kappa[3:], 0.0, atol=1e-12)


def test_h2k_matches_series_of_h():
    # h(s) = s^2/2 - log cosh s = s^4/12 - ..., so h''''(0) = 2
    e = 0.05
    s = e * np.arange(-2, 3)
    d4 = np.dot([1, -4, 6, -4, 1], h_eval(RAD, s)) / e**4
    assert d4 == pytest.approx(2.0, rel=1e-2)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(min_value=0.05, max_value=0.95), a=st.floats(min_value=0.5, max_value=3))
def test_symmetric_rho_has_zero_odd_cumulants(p, a):
    kappa = cumulants_from_moments(moments(symmetric_rho(p, a), 8))
    assert abs(kappa[3]) <= 1e-12
    assert abs(kappa[5]) <= 1e-10


def test_analysis_invariant_under_reordering():
    r = math.sqrt(3)
    a = analyze_rho(RhoMeasure([r, 0.0, -r], [1 / 6, 2 / 3, 1 / 6]))
    b = analyze_rho(THREE)
    assert a.k == b.k and a.h2k == pytest.approx(b.h2k, abs=1e-12)


def test_analysis_rejects_positive_fourth_cumulant():
    with pytest.raises(ConditionError, match="negative"):
        analyze_rho(symmetric_rho(0.2, 1.0))


def test_analysis_rejects_odd_max_order():
    with pytest.raises(ValueError):
        analyze_rho(RAD, max_order=5)


# --- h, psi, phi -------------------------------------------------------------------

def test_h_rademacher():
    assert h_eval(RAD, 1.0) == pytest.approx(0.5 - math.log(math.cosh(1.0)), rel=1e-14)
    assert h_eval(RAD, 1.0) == pytest.approx(0.066219, abs=1e-6)
    assert abs(h_eval(THREE, 0.0)) <= 1e-15


@settings(max_examples=30, deadline=None)
@given(s=st.floats(min_value=-5, max_value=5))
def test_h_even_and_derivative(s):
    assert h_eval(THREE, s) == pytest.approx(h_eval(THREE, -s), abs=1e-13)
    assert h_prime(RAD, s) == pytest.approx(s - math.tanh(s), abs=1e-13)


def test_condition_ii():
    assert condition_ii_holds(RAD)
    assert condition_ii_holds(THREE)


def test_condition_ii_detects_extra_root():
    # rho with positive kappa_4 makes h' change sign away from 0
    assert not condition_ii_holds(symmetric_rho(0.2, 1.0))


def test_psi_phi_rademacher():
    psi, phi = psi_phi(RAD, math.inf, 1.0)
    assert psi == pytest.approx(math.tanh(1.0), rel=1e-14)
    assert psi == pytest.approx(0.76159, abs=1e-5)
    s = np.linspace(-3, 3, 13)
    assert np.allclose(psi_phi(RAD, math.inf, s)[1], 1.0)
    assert abs(psi_phi(THREE, math.inf, 0.0)[0]) <= 1e-15


def test_psi_n_converges_at_rate_one_over_n():
    s = np.linspace(-THREE.L, THREE.L, 2001)
    scaled = []
    for n in (100, 1000, 10000):
        dev = np.max(np.abs(psi_phi(THREE, n, s)[0] - psi_phi(THREE, math.inf, s)[0]))
        scaled.append(n * dev)
    for a, b in zip(scaled, scaled[1:]):
        assert 0.5 <= b / a <= 2.0


def test_site_conditional_rademacher_is_logistic():
    n, s_rest = 20, 6.0
    p = site_conditional(RAD, n, s_rest)
    m = s_rest / n
    assert p[1] == pytest.approx(1 / (1 + math.exp(-2 * m)), rel=1e-14)


# --- exact law of S_n ------------------------------------------------------------

def test_rademacher_n2():
    d = exact_magnetization_dist(RAD, 2)
    pmf = dict(zip(d.s_values, d.pmf))
    e = math.e
    assert pmf[2.0] == pytest.approx(e / (2 * e + 2), rel=1e-14)
    assert pmf[0.0] == pytest.approx(2 / (2 * e + 2), rel=1e-14)
    assert pmf[2.0] == pytest.approx(0.36552, abs=1e-5)


def test_rademacher_n1():
    d = exact_magnetization_dist(RAD, 1)
    assert np.allclose(d.pmf, [0.5, 0.5], rtol=1e-14)


@pytest.mark.parametrize("rho", [RAD, THREE], ids=["rad", "three"])
@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_dp_matches_bruteforce(rho, n):
    oracle = cw_bruteforce(list(rho.points), list(rho.weights), n)
    d = exact_magnetization_dist(rho, n)
    assert len(d.s_values) == len(oracle)
    for s, lp in zip(d.s_values, d.log_pmf):
        assert abs(lp - math.log(oracle[round(float(s), 9)])) <= 1e-10


@pytest.mark.parametrize("rho,n", [(RAD, 64), (RAD, 65), (THREE, 40)])
def test_pmf_normalized_and_symmetric(rho, n):
    d = exact_magnetization_dist(rho, n)
    assert abs(logsumexp(d.log_pmf)) <= 1e-12
    assert np.allclose(d.log_pmf, d.log_pmf[::-1], atol=1e-12)
    assert np.allclose(d.labels, -d.labels[::-1])


def test_rademacher_lattice_size():
    assert len(exact_magnetization_dist(RAD, 64).log_pmf) == 65


def test_state_budget():
    with pytest.raises(StateSpaceOverflow, match="n=1000"):
        exact_magnetization_dist(RAD, 1000, max_states=100)


def test_csv_round_trip(tmp_path):
    d = exact_magnetization_dist(THREE, 30)
    path = tmp_path / "d.csv"
    d.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "s_value,w_value,log_prob"
    back = MagnetizationDist.from_csv(path, 30, d.k, d.step)
    assert np.array_equal(back.labels, d.labels)
    assert np.array_equal(back.log_pmf, d.log_pmf)


def test_cache_key_depends_on_inputs():
    assert cache_key(RAD, 64) == cache_key(RhoMeasure.rademacher(), 64)
    assert cache_key(RAD, 64) != cache_key(RAD, 65)
    assert cache_key(RAD, 64) != cache_key(THREE, 64)


def test_tail_at_zero_splits_mass():
    d = exact_magnetization_dist(RAD, 64)
    p0 = float(d.pmf[d.labels == 0][0])
    assert tail_prob(d, 2, 0.0) == pytest.approx(0.5 * (1 + p0), rel=1e-12)


def test_tail_beyond_support():
    n = 64
    d = exact_magnetization_dist(RAD, n)
    assert tail_prob(d, 2, n ** 0.25 * RAD.L + 0.01) == 0.0


def test_tail_rademacher_n2():
    d = exact_magnetization_dist(RAD, 2)
    assert tail_prob(d, 2, 1.0) == pytest.approx(math.e / (2 * math.e + 2), rel=1e-12)


def test_tail_includes_atom():
    d = exact_magnetization_dist(RAD, 2)
    w_top = 2 * 2 ** -0.75
    assert tail_prob(d, 2, w_top) == pytest.approx(tail_prob(d, 2, 1.0))


def test_tail_rejects_negative_z():
    with pytest.raises(ValueError):
        tail_prob(exact_magnetization_dist(RAD, 4), 2, -0.1)


# --- exchangeable pair ------------------------------------------------------------

def test_pair_step_bound_rademacher():
    d = pair_diagnostics(analyze_rho(RAD), 256)
    assert d.delta == pytest.approx(0.03125, rel=1e-14)
    assert d.max_step <= d.delta + 1e-15


def test_rademacher_k2_vanishes():
    d = pair_diagnostics(analyze_rho(RAD), 128)
    assert np.all(np.abs(d.k2_rows[:, 1]) <= 1e-15)


def test_pair_drift_tracks_limit_drift():
    an = analyze_rho(RAD)
    d = pair_diagnostics(an, 512)
    W, mean_drift, g = d.drift_rows.T
    core = np.abs(W) <= 1.5
    assert np.allclose(mean_drift[core], g[core], atol=0.1)


def test_second_moment_envelope_decays():
    an = analyze_rho(THREE)
    ns = [64, 128, 256, 512]
    d1 = [pair_diagnostics(an, n).delta1 for n in ns]
    assert all(b < a for a, b in zip(d1, d1[1:]))
    slope = fit_exponent(list(zip(ns, d1))).slope
    assert abs(slope + 1 / 3) <= 0.25


def test_pair_diagnostics_from_samples(caplog):
    an = analyze_rho(THREE)
    run = glauber_sampler(THREE, 64, seed=3, burn_in_sweeps=200, n_samples=4000,
                          record_counts=True)
    with caplog.at_level(logging.WARNING):
        d = pair_diagnostics(an, 64, samples=run, n_bins=40, min_bin_count=100)
    assert d.n_bins == 40 and d.dropped_bins == 0
    assert d.max_step <= d.delta + 1e-12
    # every bin has >= 100 samples, so nothing was dropped or logged
    assert not caplog.records
    exact = pair_diagnostics(an, 64)
    assert d.delta1 == pytest.approx(exact.delta1, rel=0.5)


def test_pair_diagnostics_exact_state_budget():
    with pytest.raises(StateSpaceOverflow):
        pair_diagnostics(analyze_rho(THREE), 4000, max_types=1000)
