"""Invariant checks run by ``newsvendor-lab verify`` and the acceptance tests.

Every check returns a :class:`CheckResult`. Hard-instance parameters are
obtained through an injectable factory so a deliberately broken family can be
fed through the same checks.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cost import ConvexPiecewiseCost, LinearCost, QuadraticProductionCost, true_expected_cost, true_gradient
from .demand import (
    HardInstanceDemand,
    HardInstanceParams,
    LocalFlatDemand,
    UniformDemand,
    hard_instance_breakpoints,
    hard_instance_cdf,
    hard_instance_cdf_integral,
    hard_instance_optimal,
    hard_instance_pdf,
    hard_instance_quantile,
    prior_cdf,
    prior_pdf,
)
from .lowerbound import (
    fisher_single,
    fisher_upper_bounds,
    likelihood_continuity,
    prior_fisher,
    prior_fisher_quadrature,
    score_mean,
    theta_grid,
    van_trees_bound,
)
from .policy import SAAPolicy, mle_uniform_decide, saa_decide
from .quadrature import integrate_piecewise
from .rng import replication_rng

SWEEP_ALPHAS = (0.1, 0.2, 0.4)
SWEEP_RHOS = (0.25, 0.5, 0.75)
SCOPES = ("all", "demand", "policy", "lowerbound")

HardInstanceFactory = Callable[[float, float, float], HardInstanceParams]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def perturbed_factory(shift: float = 1e-3) -> HardInstanceFactory:
    """Hard-instance factory whose second breakpoint is moved by ``shift``."""

    def factory(alpha, rho, theta):
        p = hard_instance_breakpoints(alpha, rho, theta)
        return dataclasses.replace(p, l2=p.l2 + shift)

    return factory


def sweep_params(factory: HardInstanceFactory = hard_instance_breakpoints):
    for a in SWEEP_ALPHAS:
        for rho in SWEEP_RHOS:
            for th in theta_grid(a):
                yield factory(a, rho, float(th))


def _knots(p: HardInstanceParams) -> list[float]:
    return [p.l1, p.l2, p.r2, p.r1]


def _worst(values, label: str, tol: float, name: str) -> CheckResult:
    worst = float(np.max(values))
    return CheckResult(name, worst <= tol, f"max {label} {worst:.3g} (tol {tol:g})")


# ---------------------------------------------------------------------------
# demand


def check_mass(factory=hard_instance_breakpoints) -> CheckResult:
    errs = [
        abs(integrate_piecewise(lambda x: hard_instance_pdf(x, p), [0.0, *_knots(p), 1.0], 1e-10) - 1.0)
        for p in sweep_params(factory)
    ]
    return _worst(errs, "|mass - 1|", 1e-8, "hard_instance.mass")


def check_density_floor(factory=hard_instance_breakpoints) -> CheckResult:
    xs = np.linspace(0.0, 1.0, 20001)
    gaps = []
    for p in sweep_params(factory):
        gaps.append(max(0.0, p.alpha - float(np.min(hard_instance_pdf(xs, p)))))
    return _worst(gaps, "shortfall below alpha", 1e-12, "hard_instance.density_floor")


def check_continuity(factory=hard_instance_breakpoints) -> CheckResult:
    jumps = []
    for p in sweep_params(factory):
        for k in _knots(p):
            lo, hi = np.nextafter(k, -np.inf), np.nextafter(k, np.inf)
            jumps.append(abs(float(hard_instance_pdf(hi, p)) - float(hard_instance_pdf(lo, p))))
            jumps.append(abs(float(hard_instance_cdf(hi, p)) - float(hard_instance_cdf(lo, p))))
    return _worst(jumps, "jump at a breakpoint", 1e-12, "hard_instance.continuity")


def check_optimum(factory=hard_instance_breakpoints) -> CheckResult:
    errs = []
    bad_bracket = 0
    for p in sweep_params(factory):
        errs.append(abs(hard_instance_optimal(p) - float(hard_instance_quantile(p.rho, p))))
        if not hard_instance_cdf(p.l2, p) < p.rho < hard_instance_cdf(p.r2, p):
            bad_bracket += 1
    res = _worst(errs, "|x*(theta) - quantile(rho)|", 1e-9, "hard_instance.optimum")
    if bad_bracket:
        return CheckResult(res.name, False, res.detail + f"; rho outside (F(l2), F(r2)) for {bad_bracket} cases")
    return res


def check_cdf_integral(factory=hard_instance_breakpoints) -> CheckResult:
    errs = []
    xs = np.linspace(0.0, 1.0, 7)
    for a in SWEEP_ALPHAS:
        p = factory(a, 0.5, a / 40)
        for x in xs:
            pts = [0.0, *[k for k in _knots(p) if k < x], float(x)]
            quad = integrate_piecewise(lambda s: hard_instance_cdf(s, p), pts, 1e-11)
            errs.append(abs(quad - float(hard_instance_cdf_integral(x, p))))
    return _worst(errs, "|G - quadrature|", 1e-9, "hard_instance.cdf_integral")


def check_quantile_roundtrip(factory=hard_instance_breakpoints) -> CheckResult:
    qs = np.linspace(0.0, 1.0, 2001)
    errs = []
    models = [UniformDemand(0.0, 1.0), UniformDemand(2.0, 5.0), LocalFlatDemand(0.4, 0.05, 0.5), LocalFlatDemand(0.2, 0.2, 0.3)]
    for m in models:
        errs.append(float(np.max(np.abs(m.cdf(m.quantile(qs)) - qs))))
    for a in SWEEP_ALPHAS:
        for rho in SWEEP_RHOS:
            p = factory(a, rho, 0.0)
            errs.append(float(np.max(np.abs(hard_instance_cdf(hard_instance_quantile(qs, p), p) - qs))))
    return _worst(errs, "|F(Q(q)) - q|", 1e-9, "demand.quantile_roundtrip")


def check_prior() -> CheckResult:
    worst = 0.0
    for a in SWEEP_ALPHAS:
        b = a / 20
        mass = integrate_piecewise(lambda th: prior_pdf(th, a), [-b, b], 1e-10)
        worst = max(worst, abs(mass - 1), abs(float(prior_cdf(b, a)) - 1), abs(float(prior_cdf(-b, a))))
        worst = max(worst, float(prior_pdf(b, a)), float(prior_pdf(-b, a)))
    return CheckResult("prior.normalization", worst <= 1e-9, f"max mass/endpoint error {worst:.3g}")


# ---------------------------------------------------------------------------
# policy and cost


def _random_cost(rng: np.random.Generator):
    if rng.random() < 0.5:
        return LinearCost(float(rng.uniform(0.1, 3)), float(rng.uniform(0.1, 3)))
    n_o, n_u = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    over = np.cumsum(rng.uniform(0.1, 1.5, n_o))
    under = np.cumsum(rng.uniform(0.1, 1.5, n_u))
    ob = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.6, n_o - 1))])
    ub = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.6, n_u - 1))])
    return ConvexPiecewiseCost(np.column_stack([ob, over]).tolist(), np.column_stack([ub, under]).tolist())


def check_saa_brute_force(n_instances: int = 500, grid_points: int = 100_000, seed: int = 0) -> CheckResult:
    """SAA's empirical cost against the minimum over a fine grid."""
    rng = replication_rng(seed, 0, stream=7)
    grid = np.linspace(0.0, 1.0, grid_points)
    res = grid[1] - grid[0]
    worst = -np.inf
    for _ in range(n_instances):
        cost = _random_cost(rng)
        hist = rng.random(int(rng.integers(1, 13)))
        x = saa_decide(hist, cost)
        c_x = float(cost.empirical_cost(x, hist))
        c_grid = float(np.min(cost.empirical_cost(grid, hist)))
        tol = 1e-9 + cost.gradient_bound * res
        # SAA must not lose to the grid, and the grid must not beat it by more than its resolution
        worst = max(worst, (c_x - c_grid) - 1e-9, (c_grid - c_x) - tol)
    return CheckResult("saa.brute_force", worst <= 0, f"{n_instances} instances, worst excess {worst:.3g}")


def check_saa_slack(n_traj: int = 50, seed: int = 0) -> CheckResult:
    """``|g_hat_t(x_hat_t)| <= C1 / sqrt(t)`` on every step of full trajectories."""
    worst = -np.inf
    for k in range(n_traj):
        rng = replication_rng(seed, k, stream=8)
        if k % 2 == 0:
            cost = LinearCost(float(rng.uniform(0.2, 3)), float(rng.uniform(0.2, 3)))
            T = 2000
        else:
            cost = _random_cost(rng)
            T = 150
        demand = UniformDemand(0.0, 1.0) if k % 4 < 2 else LocalFlatDemand(0.4, 0.1, 0.5)
        d = demand.sample(rng, T)
        xs = SAAPolicy(cost).path(d)
        for t in range(1, T + 1):
            g = abs(float(cost.empirical_subgradient(xs[t - 1], d[:t])))
            worst = max(worst, g - cost.saa_slack / math.sqrt(t))
    return CheckResult("saa.slack", worst <= 1e-12, f"{n_traj} trajectories, worst excess {worst:.3g}")


def check_cost_oracle() -> CheckResult:
    """Closed-form expected cost and gradient against adaptive quadrature."""
    demands = [UniformDemand(0.0, 1.0), LocalFlatDemand(0.4, 0.1, 0.5), HardInstanceDemand(0.2, 0.5, 0.004)]
    costs = [
        LinearCost(1.0, 3.0),
        ConvexPiecewiseCost([[0, 0.5], [0.2, 1.5]], [[0, 1.0], [0.3, 2.0]]),
        QuadraticProductionCost(0.7, 1.3),
    ]
    worst = 0.0
    for dem in demands:
        for c in costs:
            for x in (0.0, 0.13, 0.5, 0.77, 1.0):
                worst = max(
                    worst,
                    abs(float(true_expected_cost(x, c, dem)) - true_expected_cost(x, c, dem, method="quadrature")),
                    abs(float(true_gradient(x, c, dem)) - true_gradient(x, c, dem, method="quadrature")),
                )
    return CheckResult("cost.closed_vs_quadrature", worst <= 1e-9, f"max deviation {worst:.3g}")


def check_mle_equivariance(seed: int = 0) -> CheckResult:
    rng = replication_rng(seed, 0, stream=9)
    worst = 0.0
    for _ in range(200):
        h = rng.random(int(rng.integers(1, 20)))
        rho, a, s = float(rng.random()), float(rng.uniform(-5, 5)), float(rng.uniform(0.1, 10))
        lhs = mle_uniform_decide(a + s * h, rho)
        rhs = a + s * mle_uniform_decide(h, rho)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return CheckResult("mle.equivariance", worst <= 1e-12, f"max relative deviation {worst:.3g}")


# ---------------------------------------------------------------------------
# lower bound


def check_fisher_bounds(factory=hard_instance_breakpoints) -> CheckResult:
    worst = -np.inf
    for p in sweep_params(factory):
        i1 = fisher_single(p)
        b1, b2 = fisher_upper_bounds(p)
        worst = max(worst, i1 - b1, i1 - b2)
    return CheckResult("fisher.upper_bounds", worst <= 0, f"max excess over bound {worst:.3g}")


def check_fisher_shift_invariance(factory=hard_instance_breakpoints) -> CheckResult:
    spread = []
    for a in SWEEP_ALPHAS:
        for rho in SWEEP_RHOS:
            vals = [fisher_single(factory(a, rho, float(th))) for th in theta_grid(a)]
            spread.append(max(vals) - min(vals))
    return _worst(spread, "spread across theta", 1e-6, "fisher.shift_invariance")


def check_score_mean(factory=hard_instance_breakpoints) -> CheckResult:
    vals = [abs(score_mean(p)) for p in sweep_params(factory)]
    return _worst(vals, "|E[score]|", 2e-6, "fisher.score_mean")


def check_prior_fisher() -> CheckResult:
    errs = [abs(prior_fisher_quadrature(a) / prior_fisher(a) - 1) for a in (0.05, *SWEEP_ALPHAS, 0.5)]
    return _worst(errs, "relative error", 1e-6, "prior.fisher")


def check_likelihood_continuity(factory=hard_instance_breakpoints) -> CheckResult:
    """``sup_x |f(x|theta + d) - f(x|theta)| / d`` stays bounded as ``d`` shrinks."""
    deltas = np.array([1e-3, 1e-4, 1e-5])
    worst = 0.0
    for a in SWEEP_ALPHAS:
        p = factory(a, 0.5, 0.0)
        ratios = likelihood_continuity(p, deltas) / deltas
        worst = max(worst, float(np.max(ratios) / np.min(ratios)) - 1)
    return CheckResult("likelihood.continuity", worst <= 0.1, f"max spread of sup|df|/delta {worst:.3g}")


def check_van_trees_constants() -> CheckResult:
    rep = van_trees_bound(10_000, 0.2, 0.5, 1.0, 1.0)
    per = rep.per_period_at(100)
    target = 0.2 * 64 / (11600 * math.pi**2)
    ok = abs(per - target) <= 1e-12 and rep.exceeds_log_bound and bool(np.all(np.diff(rep.per_period) < 0))
    return CheckResult(
        "van_trees.bound", ok, f"per-period(100) {per:.6g}, cumulative {rep.cumulative:.4g} vs K6 lnT/alpha {rep.log_bound:.4g}"
    )


DEMAND_CHECKS = (
    check_mass,
    check_density_floor,
    check_continuity,
    check_optimum,
    check_cdf_integral,
    check_quantile_roundtrip,
)
POLICY_CHECKS = (check_saa_brute_force, check_saa_slack, check_cost_oracle, check_mle_equivariance)
LOWERBOUND_CHECKS = (
    check_fisher_bounds,
    check_fisher_shift_invariance,
    check_score_mean,
    check_likelihood_continuity,
)


def run_checks(scope: str = "all", factory: HardInstanceFactory = hard_instance_breakpoints, seed: int = 0) -> list[CheckResult]:
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; expected one of {SCOPES}")
    out = []
    if scope in ("all", "demand"):
        out += [c(factory) for c in DEMAND_CHECKS]
        out.append(check_prior())
    if scope in ("all", "policy"):
        out += [check_saa_brute_force(seed=seed), check_saa_slack(seed=seed), check_cost_oracle(), check_mle_equivariance(seed)]
    if scope in ("all", "lowerbound"):
        out += [c(factory) for c in LOWERBOUND_CHECKS]
        out += [check_prior_fisher(), check_van_trees_constants()]
    return out
