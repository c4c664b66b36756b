import math

import numpy as np
import pytest

from newsvendor_lab.cost import LinearCost
from newsvendor_lab.demand import hard_instance_breakpoints, prior_pdf
from newsvendor_lab.errors import ParameterDomainError
from newsvendor_lab.lowerbound import (
    bayes_mse_check,
    fisher_single,
    fisher_t,
    fisher_upper_bounds,
    k6,
    likelihood_continuity,
    mse_floor,
    prior_fisher,
    prior_fisher_quadrature,
    score_mean,
    theta_grid,
    van_trees_bound,
)
from newsvendor_lab.policy import ConstantPolicy, SAAPolicy
from newsvendor_lab.quadrature import integrate_piecewise


def fisher_closed_form(alpha, rho):
    # each bridge contributes w * pi * (1 - sqrt(1 - c^2)) with c = 1 - alpha
    w1, w2 = 2 * math.pi / rho, 2 * math.pi / (1 - rho)
    return math.pi * (w1 + w2) * (1 - math.sqrt(alpha * (2 - alpha)))


@pytest.mark.parametrize("alpha,rho", [(0.2, 0.5), (0.1, 0.25), (0.4, 0.75), (0.5, 0.5), (0.05, 0.3)])
def test_fisher_matches_closed_form(alpha, rho):
    p = hard_instance_breakpoints(alpha, rho, alpha / 37)
    assert fisher_single(p) == pytest.approx(fisher_closed_form(alpha, rho), abs=1e-7)


def test_fisher_example_bounds():
    p = hard_instance_breakpoints(0.2, 0.5, 0.0)
    i1 = fisher_single(p)
    b1, b2 = fisher_upper_bounds(p)
    assert b1 == pytest.approx(2 * math.pi * 0.8 * 8 * math.pi)
    assert b1 == pytest.approx(126.33, abs=5e-3)
    assert b2 == pytest.approx(16 * math.pi**2)
    assert i1 <= b1 and i1 <= b2


def test_fisher_shift_invariant():
    for a in (0.1, 0.4):
        vals = [fisher_single(hard_instance_breakpoints(a, 0.5, float(th))) for th in theta_grid(a)]
        assert max(vals) - min(vals) < 1e-6


def test_fisher_t_is_additive():
    p = hard_instance_breakpoints(0.2, 0.5, 0.0)
    assert fisher_t(250, p) == pytest.approx(250 * fisher_single(p), rel=1e-10)


def test_prior_fisher_values():
    assert prior_fisher(0.2) == pytest.approx(10000 * math.pi**2)
    assert prior_fisher(0.2) == pytest.approx(98696.04, abs=0.01)
    assert prior_fisher(0.1) == pytest.approx(40000 * math.pi**2)
    for a in (0.05, 0.13, 0.4):
        assert prior_fisher(a / 2) == pytest.approx(4 * prior_fisher(a))
        assert prior_fisher_quadrature(a) == pytest.approx(prior_fisher(a), rel=1e-6)
    with pytest.raises(ParameterDomainError):
        prior_fisher(0.0)


def test_score_mean_zero():
    for th in theta_grid(0.3, 7):
        assert abs(score_mean(hard_instance_breakpoints(0.3, 0.4, float(th)))) <= 2e-6


def test_likelihood_is_lipschitz_in_theta():
    p = hard_instance_breakpoints(0.2, 0.5, 0.0)
    deltas = np.array([1e-3, 1e-4, 1e-5, 1e-6])
    ratio = likelihood_continuity(p, deltas) / deltas
    # sup |d f / d theta| = (1 - alpha) w
    assert ratio == pytest.approx(np.full(4, 0.8 * 4 * math.pi), rel=2e-3)


def test_van_trees_per_period_example():
    rep = van_trees_bound(10_000, 0.2, 0.5, 1.0, 1.0)
    assert rep.per_period_at(100) == pytest.approx(0.2 * 64 / (11600 * math.pi**2), rel=1e-12)
    assert abs(rep.per_period_at(100) - 1.118e-4) <= 1e-7
    assert rep.prior_info == pytest.approx(10000 * math.pi**2)
    assert rep.info_per_sample_bound == pytest.approx(16 * math.pi**2)
    assert rep.hprime_sq == pytest.approx(64.0)
    assert rep.curvature_lb == pytest.approx(0.4)


def test_k6_example():
    assert k6(0.5, 1.0, 1.0) == pytest.approx(1 / (400 * math.pi**2) / 6)
    assert k6(0.5, 1.0, 1.0) == pytest.approx(4.22e-5, abs=5e-8)


def test_van_trees_cumulative_and_monotone():
    rep = van_trees_bound(10_000, 0.2, 0.5)
    assert rep.horizon_condition
    assert rep.exceeds_log_bound
    assert np.all(np.diff(rep.per_period) < 0) and np.all(rep.per_period > 0)
    # sum of c / (a t + b) lies between the two integral bounds
    c, a, b = 0.2 * 64, 16 * math.pi**2, 10000 * math.pi**2
    lo = c / a * math.log((a * 10_001 + b) / (a + b))
    hi = c / a * math.log((a * 10_000 + b) / b)
    assert lo <= rep.cumulative <= hi


def test_van_trees_domain():
    with pytest.raises(ParameterDomainError):
        van_trees_bound(100, 0.6, 0.5)
    with pytest.raises(ParameterDomainError):
        van_trees_bound(0, 0.2, 0.5)
    with pytest.raises(ParameterDomainError):
        van_trees_bound(100, 0.2, 0.5, h=-1.0)


def test_floor_decreasing_in_t():
    floors = [mse_floor(t, 0.2, 0.5) for t in (10, 100, 1000)]
    assert floors[0] > floors[1] > floors[2]
    assert floors[1] == pytest.approx(64 / (100 * fisher_closed_form(0.2, 0.5) + 10000 * math.pi**2), rel=1e-9)


def test_constant_estimator_bayes_mse_matches_prior_moment():
    # x_hat = 1/2 gives MSE = (2/alpha - 2)^2 E[theta^2]
    a = 0.2
    m2 = integrate_piecewise(lambda th: th * th * prior_pdf(th, a), [-a / 20, a / 20], 1e-14)
    res = bayes_mse_check(ConstantPolicy(0.5), 5, a, 0.5, reps=4000, seed=2)
    assert abs(res.mse - 64 * m2) <= 3 * res.se
    assert res.passed


def test_bayes_mse_saa_above_floor():
    res = bayes_mse_check(SAAPolicy(LinearCost(1, 1)), 20, 0.2, 0.5, reps=1000, seed=5)
    assert res.passed
    assert res.floor == pytest.approx(mse_floor(20, 0.2, 0.5))


def test_bayes_mse_needs_reps():
    with pytest.raises(ParameterDomainError):
        bayes_mse_check(SAAPolicy(LinearCost(1, 1)), 20, 0.2, 0.5, reps=999)


def test_bayes_mse_deterministic():
    p = SAAPolicy(LinearCost(1, 1))
    assert bayes_mse_check(p, 10, 0.2, 0.5, 1000, 9) == bayes_mse_check(p, 10, 0.2, 0.5, 1000, 9)
