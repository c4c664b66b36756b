import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsvendor_lab.cost import (
    ConvexPiecewiseCost,
    LinearCost,
    QuadraticProductionCost,
    cost_from_config,
    critical_fractile,
    finite_difference,
    optimal_quantity,
    true_expected_cost,
    true_gradient,
)
from newsvendor_lab.demand import HardInstanceDemand, LocalFlatDemand, UniformDemand
from newsvendor_lab.errors import EmptyHistoryError, ParameterDomainError

DEMANDS = [UniformDemand(0.0, 1.0), LocalFlatDemand(0.4, 0.1, 0.5), HardInstanceDemand(0.2, 0.5, 0.004)]
COSTS = [
    LinearCost(1.0, 1.0),
    LinearCost(0.5, 2.0),
    ConvexPiecewiseCost([[0, 0.5], [0.2, 1.5]], [[0, 1.0], [0.3, 2.0], [0.6, 2.5]]),
    QuadraticProductionCost(0.7, 1.3),
]


def test_empirical_cost_example():
    assert LinearCost(1, 1).empirical_cost(2.5, [1, 2, 3, 4]) == pytest.approx(1.0)


def test_empirical_subgradient_example():
    # (h #{d < x} - b #{d > x}) / t
    assert LinearCost(1, 3).empirical_subgradient(3.5, [1, 2, 3, 4]) == pytest.approx(0.0)


def test_single_sample_cost():
    for c in COSTS:
        assert c.empirical_cost(0.3, [0.3]) == pytest.approx(float(c.cost(0.3, 0.3)))


def test_empty_history():
    with pytest.raises(EmptyHistoryError):
        LinearCost(1, 1).empirical_cost(0.5, [])
    with pytest.raises(EmptyHistoryError):
        LinearCost(1, 1).empirical_subgradient(0.5, [])


def test_kink_convention():
    c = LinearCost(2.0, 3.0)
    assert c.subgradient(0.4, 0.4) == 2.0
    assert c.subgradient(0.39, 0.4) == -3.0


def test_uniform_linear_closed_forms():
    c, u = LinearCost(1, 1), UniformDemand(0, 1)
    assert true_expected_cost(0.5, c, u) == pytest.approx(0.25, abs=1e-14)
    assert true_gradient(0.5, c, u) == pytest.approx(0.0, abs=1e-14)
    # C(x) - C(0.5) = (x - 0.5)^2 on Uniform(0, 1) with h = b = 1
    xs = np.linspace(0, 1, 11)
    assert np.allclose(c.expected_cost(xs, u) - 0.25, (xs - 0.5) ** 2, atol=1e-14)


def test_gradient_zero_at_hard_instance_optimum():
    c, d = LinearCost(1, 1), HardInstanceDemand(0.2, 0.5, 0.0)
    assert true_gradient(0.5, c, d) == pytest.approx(2 * d.cdf(0.5) - 1, abs=1e-15)
    assert true_gradient(0.5, c, d) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize(
    "cost,demand,expected",
    [
        (LinearCost(1, 1), UniformDemand(0, 1), 0.5),
        (LinearCost(1, 3), UniformDemand(0, 1), 0.75),
        (LinearCost(1, 1), HardInstanceDemand(0.2, 0.5, 0.01), 0.42),
    ],
)
def test_optimal_quantity_examples(cost, demand, expected):
    assert optimal_quantity(cost, demand) == pytest.approx(expected, abs=1e-9)


def test_optimal_quantity_general_cost_root():
    for d in DEMANDS:
        for c in COSTS[2:]:
            x = optimal_quantity(c, d)
            assert abs(true_gradient(x, c, d)) <= 1e-8 or x in (0.0, d.upper_support)


def test_production_optimum_closed_form():
    # 2 kappa x = p (1 - x) on Uniform(0, 1)
    c = QuadraticProductionCost(0.7, 1.3)
    assert optimal_quantity(c, UniformDemand(0, 1)) == pytest.approx(1.3 / (1.4 + 1.3), abs=1e-10)


@pytest.mark.parametrize("demand", DEMANDS, ids=repr)
@pytest.mark.parametrize("cost", COSTS, ids=repr)
def test_closed_form_matches_quadrature(cost, demand):
    for x in np.linspace(0, 1, 9):
        assert true_expected_cost(x, cost, demand) == pytest.approx(
            true_expected_cost(x, cost, demand, method="quadrature"), abs=1e-9
        )
        assert true_gradient(x, cost, demand) == pytest.approx(
            true_gradient(x, cost, demand, method="quadrature"), abs=1e-9
        )


@pytest.mark.parametrize("demand", DEMANDS, ids=repr)
@pytest.mark.parametrize("cost", COSTS, ids=repr)
def test_gradient_matches_finite_differences(cost, demand):
    # C' has a kink wherever x - u or x + v lands on a demand breakpoint
    bps = np.concatenate([demand.breakpoints(), [demand.lower_support, demand.upper_support]])
    kinks = np.concatenate([bps, bps + 0.2, bps - 0.3, bps - 0.6])
    for x in np.linspace(0.02, 0.98, 25):
        if np.min(np.abs(kinks - x)) < 1e-3:
            continue
        fd = finite_difference(lambda v: float(cost.expected_cost(v, demand)), float(x))
        assert fd == pytest.approx(float(true_gradient(x, cost, demand)), abs=1e-6)


def test_linear_gradient_identity():
    for d in DEMANDS:
        c = LinearCost(0.7, 1.9)
        xs = np.linspace(0, 1, 101)
        assert np.allclose(c.expected_gradient(xs, d), 2.6 * d.cdf(xs) - 1.9, atol=1e-10)


def test_curvature_witness_on_hard_instance():
    # C'' = (h + b) f >= (h + b) alpha
    c, d = LinearCost(1, 1), HardInstanceDemand(0.2, 0.5, 0.0)
    xs = np.linspace(0.01, 0.99, 300)
    second = np.array([finite_difference(lambda v: float(c.expected_gradient(v, d)), float(x), 1e-6) for x in xs])
    assert np.all(second >= 2 * 0.2 - 1e-5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 3), st.floats(0, 1))
def test_subgradient_monotone_in_x(i, d):
    xs = np.linspace(0, 1, 100)
    g = COSTS[i].subgradient(xs, d)
    assert np.all(np.diff(g) >= 0)
    assert np.all(np.abs(g) <= COSTS[i].gradient_bound + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 3), st.floats(0.01, 1))
def test_per_sample_minimizer_below_demand(i, d):
    xs = np.linspace(0, 1, 2001)
    vals = COSTS[i].cost(xs, d)
    assert xs[np.argmin(vals)] <= d + 1e-3


def test_constants():
    assert LinearCost(1, 3).gradient_bound == 3 and LinearCost(1, 3).saa_slack == 4
    assert critical_fractile(1, 3) == 0.75
    pc = COSTS[2]
    assert pc.gradient_bound == 2.5
    prod = QuadraticProductionCost(0.7, 1.3, d_bar=2.0)
    assert prod.gradient_bound == pytest.approx(2 * 0.7 * 2 + 1.3)


def test_piecewise_with_single_slopes_is_linear():
    a = ConvexPiecewiseCost([[0, 1.5]], [[0, 0.5]])
    b = LinearCost(1.5, 0.5)
    xs = np.linspace(0, 1, 17)
    for d in DEMANDS:
        assert np.allclose(a.expected_cost(xs, d), b.expected_cost(xs, d), atol=1e-14)


@pytest.mark.parametrize(
    "record",
    [
        {"kind": "linear", "h": -1, "b": 1},
        {"kind": "linear", "h": 1},
        {"kind": "linear", "h": 1, "b": 1, "q": 2},
        {"kind": "piecewise", "overage": [[0, 2], [0.5, 1]], "underage": [[0, 1]]},
        {"kind": "piecewise", "overage": [[0.1, 1]], "underage": [[0, 1]]},
        {"kind": "production", "kappa": 0, "p": 1},
        {"kind": "quadratic"},
    ],
)
def test_invalid_configs(record):
    with pytest.raises(ParameterDomainError):
        cost_from_config(record)


def test_config_roundtrip():
    for c in COSTS:
        again = cost_from_config(c.to_config())
        assert np.allclose(again.cost(np.linspace(0, 1, 7), 0.4), c.cost(np.linspace(0, 1, 7), 0.4))
