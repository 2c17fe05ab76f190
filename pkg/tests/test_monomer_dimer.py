import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from mdlab.errors import AmbiguousMaximizer, StateSpaceOverflow
from mdlab.monomer_dimer import (CRITICAL, NONCRITICAL, H, H_and_derivs, L_drifts, MDMagnetizationDist,
                                 MDParams, critical_constants, exact_magnetization_dist,
                                 fixed_point_gap, matchings_log_count, monomer_map, pair_moments,
                                 richardson_derivative, solve_m0, tail_prob, tau)
from oracles import md_bruteforce, perfect_matching_count

J_C, H_C, M_C = critical_constants()
LAMBDA_C = 12 + 17 * math.sqrt(2) / 2  # closed form of -H''''(m_c)
NONCRIT_POINTS = [(0.5, 0.0), (0.0, 0.0), (1.0, -0.3), (0.2, 0.7), (1.4, -0.33), (1.2, 0.5)]


# --- closed forms ------------------------------------------------------------

def test_critical_constants():
    assert J_C == pytest.approx(1 / (4 * (3 - 2 * math.sqrt(2))), rel=1e-15)
    assert J_C == pytest.approx(1.4571068, abs=1e-7)
    assert M_C == pytest.approx(0.5857864, abs=1e-7)
    assert H_C == pytest.approx(-0.3441, abs=1e-4)


def test_monomer_map_at_zero():
    assert monomer_map(0.0) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(min_value=-5, max_value=5))
def test_monomer_map_matches_textbook_form(x):
    direct = 0.5 * (math.sqrt(math.exp(4 * x) + 4 * math.exp(2 * x)) - math.exp(2 * x))
    assert monomer_map(x) == pytest.approx(direct, rel=1e-6, abs=1e-12)
    assert 0 < monomer_map(x) < 1


def test_monomer_map_stable_for_large_argument():
    assert monomer_map(40.0) == pytest.approx(1 - math.exp(-80), abs=1e-15)
    assert monomer_map(-40.0) == pytest.approx(math.exp(-40), rel=1e-6)


def test_H_first_derivative_is_scaled_fixed_point_gap():
    for J, h in [(0.5, 0.0), (1.3, -0.2)]:
        for x in (0.2, 0.5, 0.8):
            d1 = H_and_derivs(J, h, x, order=1)[1]
            assert d1 == pytest.approx(2 * J * fixed_point_gap(x, J, h), rel=1e-8)


def test_richardson_on_polynomial_and_exp():
    f = lambda x: np.exp(2 * x)
    for k in (1, 2, 3, 4):
        assert richardson_derivative(f, 0.3, k) == pytest.approx(2**k * math.exp(0.6), rel=1e-8)


def test_H_domain_errors():
    with pytest.raises(ValueError):
        H_and_derivs(0.5, 0.0, 1.2)
    with pytest.raises(ValueError):
        H_and_derivs(0.5, 0.0, 0.5, order=5)
    with pytest.raises(ValueError, match="nonpositive"):
        H(0.5, 0.0, 60.0)  # g(tau) rounds to 1


def test_critical_point_derivatives():
    d = H_and_derivs(J_C, H_C, M_C, order=4)
    assert max(abs(d[1]), abs(d[2]), abs(d[3])) <= 1e-7
    assert d[4] < 0
    assert -d[4] == pytest.approx(LAMBDA_C, rel=1e-6)


def test_H_constant_when_J_zero():
    # the variational function does not depend on x at J = 0
    x = np.linspace(0.05, 0.95, 19)
    vals = H(x, 0.0, 0.0)
    assert np.ptp(vals) <= 1e-15


def test_H_strictly_concave_below_critical_coupling():
    for J in (0.1, 0.5, 1.0, 1.4):
        x = np.linspace(0.02, 0.98, 97)
        d2 = [H_and_derivs(J, 0.0, xi, order=2)[2] for xi in x]
        assert max(d2) < 0


# --- the maximizer ---------------------------------------------------------

def test_solve_critical():
    st_ = solve_m0(J_C, H_C)
    assert st_.phase == CRITICAL
    assert abs(st_.m0 - M_C) <= 1e-10
    assert st_.lam == pytest.approx(LAMBDA_C, rel=1e-6)


@pytest.mark.parametrize("J,h", NONCRIT_POINTS)
def test_solve_noncritical(J, h):
    s = solve_m0(J, h)
    assert s.phase == NONCRITICAL
    assert 0 < s.m0 < 1
    assert abs(s.m0 - monomer_map(tau(s.m0, J, h))) <= 1e-12
    assert s.lam > 0
    if J > 0:
        d2 = H_and_derivs(J, h, s.m0, order=2)[2]
        assert d2 < 0
        assert s.lam == pytest.approx(-1 / d2 - 1 / (2 * J), rel=1e-7)


def test_solve_half_zero_grid_oracle():
    J, h = 0.5, 0.0
    x = np.linspace(0.001, 0.999, 100_000)
    gap = fixed_point_gap(x, J, h)
    changes = np.nonzero(np.sign(gap[:-1]) != np.sign(gap[1:]))[0]
    assert len(changes) == 1
    s = solve_m0(J, h)
    assert x[changes[0]] <= s.m0 <= x[changes[0] + 1]
    assert s.m0 == pytest.approx(0.6780030, abs=1e-7)


def test_zero_coupling_variance_limit():
    # as J -> 0 the variance approaches g'(h)
    s0 = solve_m0(0.0, 0.0)
    s1 = solve_m0(1e-3, 0.0)
    assert s0.lam == pytest.approx(s1.lam, rel=5e-3)


def test_coexistence_is_rejected():
    # far above J_c near the symmetric field the fixed-point map has three roots
    with pytest.raises(AmbiguousMaximizer):
        solve_m0(4.0, -1.6)


def test_negative_coupling_rejected():
    with pytest.raises(ValueError):
        solve_m0(-0.1, 0.0)
    with pytest.raises(ValueError):
        MDParams(-0.1, 0.0, 10)


def test_stationary_json_keys():
    d = solve_m0(0.5, 0.0).to_dict()
    assert set(d) == {"J", "h", "phase", "m0", "lambda"}


# --- matchings and the exact law ------------------------------------------------

@pytest.mark.parametrize("m", range(0, 13))
def test_matching_count_against_enumeration(m):
    expected = perfect_matching_count(m)
    got = matchings_log_count(m)
    if expected == 0:
        assert got == -math.inf
    else:
        assert abs(got - math.log(expected)) <= 1e-12


def test_matching_small_values():
    assert math.exp(matchings_log_count(4)) == pytest.approx(3)
    assert math.exp(matchings_log_count(6)) == pytest.approx(15)
    assert matchings_log_count(7) == -math.inf


def test_matching_recurrence():
    m = np.arange(2, 201, 2)
    lhs = matchings_log_count(m)
    rhs = np.log(m - 1) + matchings_log_count(m - 2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("n", range(2, 9))
@pytest.mark.parametrize("J,h", [(0.0, 0.0), (0.5, 0.0), (J_C, H_C), (1.1, 0.4)])
def test_exact_law_matches_dimer_enumeration(n, J, h):
    oracle = md_bruteforce(J, h, n)
    d = exact_magnetization_dist(MDParams(J, h, n))
    assert sorted(oracle) == list(d.j)
    for j, lp in zip(d.j, d.log_pmf):
        assert abs(lp - math.log(oracle[int(j)])) <= 1e-10


def test_k4_free_model():
    d = exact_magnetization_dist(MDParams(0.0, 0.0, 4))
    assert list(d.j) == [0, 2, 4]
    # weights C(4,j) (4-j-1)!! e^{b j} with b = log(4)/2 = log 2
    w = np.array([1 * 3 * 1, 6 * 1 * 4, 1 * 1 * 16], dtype=float)
    assert np.allclose(d.pmf, w / w.sum(), rtol=1e-13)


def test_all_monomer_atom_weight():
    p = MDParams(0.7, 0.1, 4)
    d = exact_magnetization_dist(p)
    logw = 4 * (p.J + p.b)
    full = [0 + math.log(3), math.log(6) + 4 * (p.J / 4 + p.b / 2), logw]
    assert d.log_pmf[-1] == pytest.approx(logw - logsumexp(full), abs=1e-12)


@pytest.mark.parametrize("n", [7, 1000, 100_000])
def test_exact_law_normalized_with_parity(n):
    d = exact_magnetization_dist(MDParams(J_C, H_C, n))
    # log-weights reach ~1e4 in magnitude, so rounding is ~1e-11 at n = 1e5
    assert abs(logsumexp(d.log_pmf)) <= 1e-10
    assert np.all((n - d.j) % 2 == 0)


def test_exact_law_size_limit():
    with pytest.raises(StateSpaceOverflow, match="n=2000000"):
        exact_magnetization_dist(MDParams(0.5, 0.0, 2_000_000))


def test_csv_round_trip(tmp_path):
    p = MDParams(0.5, 0.0, 50)
    s = solve_m0(0.5, 0.0)
    d = exact_magnetization_dist(p)
    d.to_csv(tmp_path / "md.csv", s)
    assert (tmp_path / "md.csv").read_text().splitlines()[0] == "j,w_value,log_prob"
    back = MDMagnetizationDist.from_csv(tmp_path / "md.csv", 50)
    assert np.array_equal(back.j, d.j) and np.array_equal(back.log_pmf, d.log_pmf)


def test_tail_examples():
    s = solve_m0(0.0, 0.0)
    d = exact_magnetization_dist(MDParams(0.0, 0.0, 4))
    oracle = md_bruteforce(0.0, 0.0, 4)
    z = 0.3
    expected = sum(p for M, p in oracle.items() if math.sqrt(4) * (M / 4 - s.m0) >= z)
    assert tail_prob(d, s, z) == pytest.approx(expected, rel=1e-12)
    assert tail_prob(d, s, 10.0) == 0.0
    with pytest.raises(ValueError):
        tail_prob(d, s, -1.0)


def test_critical_tail_at_zero_tends_to_half():
    s = solve_m0(J_C, H_C)
    for n in (1000, 10_000, 100_000):
        d = exact_magnetization_dist(MDParams(J_C, H_C, n))
        assert abs(tail_prob(d, s, 0.0) - 0.5) <= 5 * n ** -0.25


# --- drift functions of the pair -----------------------------------------------

@pytest.mark.parametrize("J,h", NONCRIT_POINTS + [(J_C, H_C)])
def test_L1_vanishes_at_fixed_point(J, h):
    s = solve_m0(J, h)
    assert abs(L_drifts(J, h, s.m0)[0]) <= 1e-12


@pytest.mark.parametrize("J,h", [(0.5, 0.0), (1.0, -0.3), (0.2, 0.7)])
def test_L1_slope_noncritical(J, h):
    s = solve_m0(J, h)
    d1 = richardson_derivative(lambda x: L_drifts(J, h, x)[0], s.m0, 1)
    assert d1 == pytest.approx(L_drifts(J, h, s.m0)[1] / (2 * s.lam), rel=1e-6)


def test_L1_critical_expansion():
    s = solve_m0(J_C, H_C)
    f = lambda x: L_drifts(J_C, H_C, x)[0]
    assert abs(richardson_derivative(f, M_C, 1)) <= 1e-6
    assert abs(richardson_derivative(f, M_C, 2)) <= 1e-6
    d3 = richardson_derivative(f, M_C, 3)
    assert d3 == pytest.approx(s.lam / 2 * L_drifts(J_C, H_C, M_C)[1], rel=1e-4)


def test_pair_moments_against_L_functions():
    n = 4000
    p = MDParams(0.5, 0.0, n)
    M = np.array([1200, 2712, 3500])
    first, second = pair_moments(p, M)
    L1, L2 = L_drifts(0.5, 0.0, M / n)
    assert np.allclose(first, L1, atol=2 / n)
    assert np.allclose(second, L2, atol=2 / n)


def test_pair_second_moment_matches_scaling():
    # E[(W - W')^2] / (2 lambda) with lambda = L2(m_c) / (2 n^{3/2})
    L2c = L_drifts(J_C, H_C, M_C)[1]
    for n in (1000, 10_000):
        p = MDParams(J_C, H_C, n)
        d = exact_magnetization_dist(p)
        _, second = pair_moments(p, d.j)
        ratio = float(np.dot(d.pmf, second)) / L2c
        assert 0.8 <= ratio <= 1.2
