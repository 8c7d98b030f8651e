import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rayleigh_expectation
from malimits.channel import SystemConfig
from malimits.errors import InvalidArgumentError
from malimits.info import binary_entropy, log_binomial, mutual_information
from malimits.limits import (
    RateAllocation,
    RegionSpec,
    activity_deviation_bound,
    dof,
    error_exponent_e0,
    error_exponent_rate,
    finite_threshold_achievable,
    finite_threshold_converse,
    identification_cost_achievable,
    identification_cost_asymptotic,
    identification_cost_converse,
    limit_report,
    message_length_capacity,
    message_length_rates,
    mi_by_size_mc,
    region_check,
    theta,
)
from malimits.rand import RngStream


def cfg(**kw):
    base = dict(ell=101, k=1, n=100, n0=1, epsilon=0.05)
    base.update(kw)
    return SystemConfig(**base)


def test_identification_costs_single_active_user():
    n0, i = identification_cost_achievable(cfg(), lambda i: 2.0)
    assert (n0, i) == (pytest.approx(1.05 * math.log(100) / 2), 1)
    assert n0 == pytest.approx(2.418, abs=1e-3)
    n0, i = identification_cost_converse(cfg(), lambda i: 2.0)
    assert n0 == pytest.approx(0.95 * math.log(101) / 2) and i == 1
    assert n0 == pytest.approx(2.192, abs=1e-3)


def test_identification_cost_with_no_inactive_users_is_zero():
    c = cfg(ell=3, k=3)
    assert identification_cost_achievable(c, lambda i: 1.0) == (0.0, 0)


def test_identification_cost_one_inactive_user():
    # only i = 1 has a false-alarm candidate and log C(1, 1) = 0
    c = cfg(ell=4, k=3)
    n0, i = identification_cost_achievable(c, lambda i: 1.0)
    assert n0 == 0.0 and i == 1


def test_identification_cost_rejects_nonpositive_mi():
    with pytest.raises(InvalidArgumentError):
        identification_cost_achievable(cfg(k=2), lambda i: 0.0)
    with pytest.raises(InvalidArgumentError):
        identification_cost_converse(cfg(k=2), lambda i: -1.0)


def test_identification_cost_ties_go_to_larger_size():
    # ell - k + i choose i for i=1,2 with I chosen to tie the two ratios exactly
    c = cfg(ell=4, k=2)
    mi = {1: math.log(3), 2: math.log(6)}
    n0, i = identification_cost_converse(c, mi.__getitem__, epsilon=0.0)
    assert i == 2 and n0 == pytest.approx(1.0)


def test_identification_cost_epsilon_override():
    c = cfg()
    assert identification_cost_achievable(c, lambda i: 2.0, epsilon=0.0)[0] == pytest.approx(math.log(100) / 2)
    with pytest.raises(InvalidArgumentError):
        identification_cost_achievable(c, lambda i: 2.0, epsilon=1.0)


def test_argmax_is_k_for_sparse_activity():
    c = SystemConfig(ell=10**6, k=100, n=1000, n0=1, n_r=4, trials=2000)
    mi = mi_by_size_mc(c, stream=RngStream(1))
    _, i = identification_cost_achievable(c, mi)
    ratios = [log_binomial(c.ell - c.k, j) / mi(j) for j in range(1, c.k + 1)]
    assert i == c.k == int(np.argmax(ratios)) + 1


def test_achievable_over_converse_tends_to_one():
    ratios = []
    for ell in (10**3, 10**4, 10**5):
        c = cfg(ell=ell, k=10, epsilon=1e-6)
        mi = lambda i: 4 * math.log1p(i)  # noqa: E731
        ratios.append(identification_cost_achievable(c, mi)[0] / identification_cost_converse(c, mi)[0])
    assert all(r <= 1 + 1e-5 for r in ratios)
    assert abs(ratios[0] - 1) > abs(ratios[1] - 1) > abs(ratios[2] - 1)
    assert abs(ratios[2] - 1) < 0.01


def test_asymptotic_cost():
    assert identification_cost_asymptotic(cfg(ell=5, k=5), 1.0) == 0.0
    c = cfg(ell=100, k=10)
    assert identification_cost_asymptotic(c, 5.0) == pytest.approx(math.log(math.comb(100, 10)) / 5)
    with pytest.raises(InvalidArgumentError):
        identification_cost_asymptotic(c, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 2000), st.data(), st.floats(0.01, 50))
def test_asymptotic_cost_below_entropy_bound(ell, data, mi):
    k = data.draw(st.integers(1, ell))
    c = cfg(ell=ell, k=k)
    assert identification_cost_asymptotic(c, mi) <= ell * binary_entropy(k / ell) / mi + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 500), st.data())
def test_converse_numerator_dominates(ell, data):
    k = data.draw(st.integers(1, ell - 1))
    for i in range(1, min(k, ell - k) + 1):
        assert log_binomial(ell - k, i) <= log_binomial(ell - k + i, i) + 1e-12


def test_finite_threshold_achievable_worked_value():
    c = SystemConfig(ell=12, k=2, n=10, n0=1, epsilon=0.5)
    value = finite_threshold_achievable(c, 1, 3.0, 0.1, 0.1, 1.0)
    expected = 1.5 / 2.7 * (math.log(10) + 3 * math.log(2) + math.log(20) + 2)
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(5.21, abs=0.01)


def test_finite_threshold_achievable_limits():
    c = SystemConfig(ell=12, k=2, n=10, n0=1, epsilon=0.5)
    values = [finite_threshold_achievable(c, 1, 3.0, 0.1, d2) for d2 in (0.5, 0.9, 0.999)]
    assert values[0] < values[1] < values[2]
    assert values[2] > 100 * values[0] / 2
    with pytest.raises(InvalidArgumentError):
        finite_threshold_achievable(c, 1, 3.0, 0.1, 1.0)
    with pytest.raises(InvalidArgumentError):
        finite_threshold_achievable(c, 3, 3.0, 0.1, 0.1)


def test_finite_threshold_dominated_by_first_term():
    ratios = []
    for ell in (10**3, 10**5, 10**8):
        c = SystemConfig(ell=ell, k=2, n=10, n0=1, epsilon=0.5)
        lead = 1.5 * log_binomial(ell - 2, 2) / (0.9 * 3.0)
        ratios.append(finite_threshold_achievable(c, 2, 3.0, 0.1, 0.1) / lead)
    assert ratios[0] > ratios[1] > ratios[2] > 1
    assert ratios[2] < 1.3


def test_finite_threshold_converse_values():
    c = SystemConfig(ell=12, k=2, n=10, n0=1)
    assert finite_threshold_converse(c, 2, 2.0, 1.0, 0.1) == pytest.approx(log_binomial(12, 2) / 2.2)
    c = SystemConfig(ell=2, k=1, n=10, n0=1)
    assert finite_threshold_converse(c, 1, 2.0, 0.5, 0.1) == pytest.approx(0.0, abs=1e-15)
    assert finite_threshold_converse(c, 1, 2.0, 0.01, 0.1) == 0.0


def test_finite_converse_below_asymptotic_converse():
    for ell in (20, 200, 2000):
        for delta in (0.05, 0.2):
            c = SystemConfig(ell=ell, k=4, n=10, n0=1, epsilon=delta)
            mi = lambda i: 3 * math.log1p(i)  # noqa: E731
            finite = max(finite_threshold_converse(c, i, mi(i), 0.5, delta) for i in range(1, 5))
            asym = identification_cost_converse(c, mi, epsilon=0.0)[0] / (1 + delta)
            assert finite <= asym + 1e-12


def test_theta_values():
    assert theta(cfg(ell=10, k=10), 1.0) == 0.0
    c = cfg(ell=1000, k=100, n=500)
    mi_boundary = c.ell * binary_entropy(0.1) / c.n
    assert theta(c, mi_boundary) == pytest.approx(1.0)
    doubled = cfg(ell=2000, k=200, n=500)
    assert theta(doubled, 2.0) == pytest.approx(2 * theta(c, 2.0), rel=1e-14)


def test_theta_grows_with_quadratic_population():
    for n in (8, 16, 32):
        linear = cfg(ell=n, k=n // 2, n=n)
        square = cfg(ell=n * n, k=n // 2, n=n)
        assert theta(square, 1.0) > theta(linear, 1.0)


def test_rate_allocation_invariants():
    a = RateAllocation((1.0, 2.0, 1.0))
    assert a.mu.sum() == pytest.approx(1.0)
    assert a.c(40).sum() == pytest.approx(40.0)
    assert np.all((a.mu > 0) & (a.mu < 1))
    with pytest.raises(InvalidArgumentError):
        RateAllocation((1.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        RateAllocation(())


def test_message_length_rates_equal_and_doubled():
    c = SystemConfig(ell=40, k=4, n=100, n0=1)
    r = message_length_rates(c, RateAllocation.equal(4), 2.0)
    assert np.allclose(r, 50.0) and r.sum() == pytest.approx(200.0)
    logm = np.array([2.0, 1.0, 1.0, 1.0])
    r = message_length_rates(c, RateAllocation(tuple(logm)), 2.0)
    assert np.allclose(r, 100 * logm / logm.sum() * 2.0)
    with pytest.raises(InvalidArgumentError):
        message_length_rates(c, RateAllocation.equal(3), 2.0)


def test_message_length_capacity_values():
    c = SystemConfig(ell=1000, k=100, n=500, n0=1)
    b = message_length_capacity(c, RateAllocation.equal(100), 2.0)
    assert binary_entropy(0.1) == pytest.approx(0.3251, abs=1e-4)
    assert np.allclose(b, 10 - 10 * binary_entropy(0.1))
    assert b[0] == pytest.approx(6.749, abs=1e-3)
    full = SystemConfig(ell=5, k=5, n=50, n0=1)
    alloc = RateAllocation((1.0, 2.0, 3.0, 4.0, 5.0))
    assert np.allclose(message_length_capacity(full, alloc, 1.5), message_length_rates(full, alloc, 1.5))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=30), st.integers(1, 10**4),
       st.floats(0.01, 50), st.integers(0, 1000))
def test_capacity_summation_identity(log_m, n, mi, extra):
    k = len(log_m)
    c = SystemConfig(ell=k + extra, k=k, n=n, n0=1)
    b = message_length_capacity(c, RateAllocation(tuple(log_m)), mi)
    lhs = math.fsum(b) + c.ell * binary_entropy(c.alpha())
    assert lhs == pytest.approx(n * mi, rel=1e-9)


def test_region_check_boundary_and_zero_rates():
    c = SystemConfig(ell=100, k=10, n=50, n0=1)
    rhs = 50 * 2.0 - 100 * binary_entropy(0.1)
    inside, slack = region_check(RegionSpec((4, 6), (rhs / 10, rhs / 10)), c, 2.0)
    assert inside and slack == pytest.approx(0.0, abs=1e-9)
    inside, slack = region_check(RegionSpec((10,), (0.0,)), c, 2.0)
    assert inside and slack == pytest.approx(rhs)
    with pytest.raises(InvalidArgumentError):
        region_check(RegionSpec((3,), (1.0,)), c, 2.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5), st.floats(0, 20)), min_size=1, max_size=5),
       st.integers(0, 200), st.floats(0.1, 10), st.integers(1, 100))
def test_region_check_matches_direct_arithmetic(groups, extra, mi, n):
    counts, rates = zip(*groups)
    k = sum(counts)
    c = SystemConfig(ell=k + extra, k=k, n=n, n0=1)
    inside, slack = region_check(RegionSpec(counts, rates), c, mi)
    rhs = n * mi - (k + extra) * binary_entropy(k / (k + extra))
    lhs = sum(a * b for a, b in zip(counts, rates))
    assert slack == pytest.approx(rhs - lhs, rel=1e-9, abs=1e-9)
    assert inside == (rhs - lhs >= 0) or abs(rhs - lhs) < 1e-9


def test_activity_deviation_bound():
    assert activity_deviation_bound(1000, 0.1, 0.1, 100) == pytest.approx(0.9)
    assert activity_deviation_bound(1000, 0.0, 0.1, 100) == 0.0
    assert activity_deviation_bound(1000, 1.0, 0.1, 100) == 0.0
    assert activity_deviation_bound(1000, 0.5, 0.001, 10) == 1.0
    with pytest.raises(InvalidArgumentError):
        activity_deviation_bound(10, 0.5, 0.0, 10)


def test_activity_deviation_bound_dominates_simulation():
    ell, alpha, delta, n = 400, 0.25, 0.1, 100
    k_a = np.random.default_rng(0).binomial(ell, alpha, size=100_000)
    freq = np.mean(np.abs(k_a - ell * alpha) >= delta * n)
    assert freq <= activity_deviation_bound(ell, alpha, delta, n)


def test_e0_zero_rho_and_oracle():
    c = SystemConfig(ell=1, k=1, n=1, n0=1, trials=100_000)
    zero = error_exponent_e0(c, [1], 0.0)
    assert zero.mean == 0.0 and zero.std_error == 0.0
    oracle = -math.log(rayleigh_expectation(lambda x: 1.0 / (1.0 + x / 2.0)))
    assert oracle == pytest.approx(0.3247, rel=2e-3)
    est = error_exponent_e0(c, [1], 1.0, stream=RngStream(7))
    assert abs(est.mean - oracle) < 3 * est.std_error


def test_e0_nonnegative_and_nondecreasing_in_rho():
    c = SystemConfig(ell=4, k=4, n=4, n0=1, n_r=2, trials=20_000)
    prev = None
    for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
        est = error_exponent_e0(c, [1, 2, 3], rho, stream=RngStream(3))
        assert est.mean >= -3 * est.std_error
        if prev is not None:
            assert est.mean >= prev.mean - 3 * math.hypot(est.std_error, prev.std_error)
        prev = est


def test_rate_exponent_with_zero_rates_equals_e0():
    c = SystemConfig(ell=8, k=8, n=8, n0=1, n_r=2, trials=5000)
    alloc = RateAllocation.equal(8)
    e0 = error_exponent_e0(c, range(1, 9), 1.0, stream=RngStream(5)).mean
    er = error_exponent_rate(c, range(1, 9), alloc, 1.0, 3.0, stream=RngStream(5), epsilon=1.0)
    assert er == pytest.approx(e0, rel=1e-14) and er > 0


def test_rate_exponent_at_zero_margin_may_be_negative():
    c = SystemConfig(ell=16, k=16, n=16, n0=1, n_r=2, trials=4000)
    users = range(1, 17)
    mi = mutual_information(c, users, stream=RngStream(1)).mean
    er = error_exponent_rate(c, users, RateAllocation.equal(16), 1.0, mi, stream=RngStream(2), epsilon=0.0)
    # Jensen: -log E exp(-X) <= E X with X the shrunk log-det, which is below the full one
    assert er <= 0


def test_full_subset_exponent_positive_at_small_rho():
    for n in (16, 32, 64):
        c = SystemConfig(ell=n, k=n, n=n, n0=1, n_r=4, trials=4000)
        users = range(1, n + 1)
        mi = mutual_information(c, users, stream=RngStream(n)).mean
        er = error_exponent_rate(c, users, RateAllocation.equal(n), 0.1, mi, stream=RngStream(n, 1))
        assert er > 0


def test_rate_exponent_validates_subset():
    c = SystemConfig(ell=8, k=4, n=8, n0=1, trials=10)
    with pytest.raises(InvalidArgumentError):
        error_exponent_rate(c, [5], RateAllocation.equal(4), 1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        error_exponent_rate(c, [], RateAllocation.equal(4), 1.0, 1.0)


def test_dof():
    assert dof(SystemConfig(ell=200, k=100, n=1, n0=1, n_r=4)) == 4
    assert dof(SystemConfig(ell=10, k=2, n=1, n0=1, n_r=8, n_t=2)) == 4
    assert dof(SystemConfig(ell=10, k=2, n=1, n0=1, n_r=4, n_t=2)) == 4


def test_mi_by_size_prefix_agrees_with_direct_estimate():
    c = SystemConfig(ell=10, k=3, n=1, n0=1, n_r=2, trials=20_000)
    table = mi_by_size_mc(c, stream=RngStream(1))
    for i in (1, 3):
        direct = mutual_information(c, range(1, i + 1), stream=RngStream(2, i))
        assert abs(table(i) - direct.mean) < 4 * direct.std_error * math.sqrt(2)
    assert table(1) < table(2) < table(3)
    with pytest.raises(InvalidArgumentError):
        table(4)


def test_mi_by_size_heterogeneous_takes_worst_case():
    beta = np.array([0.1] * 5 + [10.0] * 5)
    c = SystemConfig(ell=10, k=2, n=1, n0=1, beta=beta, trials=500)
    table = mi_by_size_mc(c, stream=RngStream(3), samples=20)
    strong = mutual_information(c, [6, 7], trials=500, stream=RngStream(4)).mean
    assert table(2) < strong


def test_limit_report_consistency():
    c = SystemConfig(ell=50, k=5, n=40, n0=1, trials=5000)
    mi = mi_by_size_mc(c, stream=RngStream(1))
    rep = limit_report(c, RateAllocation.equal(5), mi(5), mi)
    assert rep.n0_achievable >= 0 and rep.n0_converse >= 0 and rep.theta >= 0
    assert rep.capacities.sum() == pytest.approx(rep.sum_rhs, rel=1e-12)
    assert rep.infeasible == (rep.theta >= 1)
