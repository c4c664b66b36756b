"""Numerics for the minimax lower bound on the hard-instance family.

The family ``f(x | theta)`` moves its optimum by ``(2/alpha - 2) theta`` as
``theta`` ranges over ``[-alpha/20, alpha/20]``. Under the raised-cosine prior
the van Trees inequality bounds the Bayes MSE of any estimator of the optimum,
and curvature ``(h + b) alpha`` converts that into a per-period regret floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demand import (
    HardInstanceDemand,
    HardInstanceParams,
    check_hard_instance_domain,
    hard_instance_breakpoints,
    hard_instance_dtheta,
    hard_instance_optimal,
    hard_instance_pdf,
    prior_dpdf,
    prior_pdf,
    prior_sample,
    score,
)
from .errors import ParameterDomainError
from .policy import Policy
from .quadrature import adaptive_simpson, integrate_piecewise
from .rng import replication_rng

FISHER_TOL = 1e-8
PRIOR_RTOL = 1e-12
THETA_GRID_POINTS = 21
MIN_BAYES_REPS = 1000
# stream ids under a replication key
DEMAND_STREAM = 0
THETA_STREAM = 1


def theta_grid(alpha: float, n: int = THETA_GRID_POINTS) -> np.ndarray:
    """``n`` equispaced shifts covering ``[-alpha/20, alpha/20]`` including both ends."""
    return np.linspace(-alpha / 20, alpha / 20, n)


def _bridges(p: HardInstanceParams) -> list[float]:
    return [p.l1, p.l2, p.r2, p.r1]


def fisher_single(params: HardInstanceParams, tol: float = FISHER_TOL) -> float:
    """One-sample Fisher information ``int (d_theta f)^2 / f`` by adaptive quadrature.

    ``d_theta f`` vanishes off the two cosine bridges, so only those are integrated.
    """

    def integrand(x):
        d = hard_instance_dtheta(x, params)
        return d * d / hard_instance_pdf(x, params)

    half = tol / 2
    return adaptive_simpson(integrand, params.l1, params.l2, half) + adaptive_simpson(
        integrand, params.r2, params.r1, half
    )


def fisher_t(t: int, params: HardInstanceParams) -> float:
    """Information in ``t`` i.i.d. samples."""
    return t * fisher_single(params)


def fisher_upper_bounds(params: HardInstanceParams) -> tuple[float, float]:
    """``(2 pi (1 - alpha)(w1 + w2), 4 pi^2 / (rho (1 - rho)))``; both bound :func:`fisher_single`."""
    a, rho = params.alpha, params.rho
    return 2 * math.pi * (1 - a) * (params.w1 + params.w2), 4 * math.pi**2 / (rho * (1 - rho))


def prior_fisher(alpha: float) -> float:
    """``int q'^2 / q = 400 pi^2 / alpha^2`` for the raised-cosine prior."""
    if not alpha > 0:
        raise ParameterDomainError(f"alpha must be positive, got {alpha}")
    return 400 * math.pi**2 / alpha**2


def prior_fisher_quadrature(alpha: float, rtol: float = PRIOR_RTOL) -> float:
    """``int q'^2 / q`` by adaptive quadrature, to ``rtol`` relative to a coarse first pass."""
    if not alpha > 0:
        raise ParameterDomainError(f"alpha must be positive, got {alpha}")

    def integrand(th):
        q = prior_pdf(th, alpha)
        dq = prior_dpdf(th, alpha)
        return np.divide(dq * dq, q, out=np.zeros_like(np.asarray(q, dtype=float)), where=q > 0)

    b = alpha / 20
    coarse = abs(adaptive_simpson(integrand, -b, b, math.inf, min_depth=4))
    return adaptive_simpson(integrand, -b, b, rtol * coarse)


def score_mean(params: HardInstanceParams, tol: float = 1e-10) -> float:
    """``E_theta[score]``; zero when differentiation and integration commute."""
    return integrate_piecewise(
        lambda x: score(x, params) * hard_instance_pdf(x, params),
        [0.0, *_bridges(params), 1.0],
        tol,
    )


def likelihood_continuity(params: HardInstanceParams, deltas, n_x: int = 4001) -> np.ndarray:
    """``max_x |f(x | theta + delta) - f(x | theta)|`` for each ``delta``."""
    xs = np.linspace(0.0, 1.0, n_x)
    base = hard_instance_pdf(xs, params)
    out = []
    for d in np.atleast_1d(deltas):
        shifted = hard_instance_breakpoints(params.alpha, params.rho, params.theta + float(d))
        out.append(float(np.max(np.abs(hard_instance_pdf(xs, shifted) - base))))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# van Trees regret floor


@dataclass
class VanTreesReport:
    T: int
    alpha: float
    rho: float
    h: float
    b: float
    per_period: np.ndarray  # bound for t = 1..T
    cumulative: float
    curvature_lb: float  # (h + b) alpha
    hprime_sq: float  # (2/alpha - 2)^2
    info_per_sample_bound: float  # 4 pi^2 / (rho (1 - rho))
    prior_info: float  # 400 pi^2 / alpha^2
    K6: float

    @property
    def horizon_condition(self) -> bool:
        return self.T >= max(self.alpha**-3, 64)

    @property
    def log_bound(self) -> float:
        return self.K6 * math.log(self.T) / self.alpha

    @property
    def exceeds_log_bound(self) -> bool:
        return self.cumulative >= self.log_bound

    def per_period_at(self, t: int) -> float:
        return float(self.per_period[t - 1])

    def to_dict(self, record=None) -> dict:
        if record is None:
            from .experiment import log_grid

            record = log_grid(self.T)
        return {
            "T": self.T,
            "alpha": self.alpha,
            "rho": self.rho,
            "h": self.h,
            "b": self.b,
            "cumulative": self.cumulative,
            "constants": {
                "curvature_lb": self.curvature_lb,
                "hprime_sq": self.hprime_sq,
                "info_per_sample_bound": self.info_per_sample_bound,
                "prior_info": self.prior_info,
                "K6": self.K6,
            },
            "horizon_condition": self.horizon_condition,
            "log_bound": self.log_bound,
            "exceeds_log_bound": self.exceeds_log_bound,
            "per_period": [{"t": int(t), "bound": self.per_period_at(int(t))} for t in record],
        }


def k6(rho: float, h: float, b: float) -> float:
    return min(rho * (1 - rho) / (4 * math.pi**2), 1 / (400 * math.pi**2)) * (h + b) / 12


def van_trees_bound(T: int, alpha: float, rho: float, h: float = 1.0, b: float = 1.0) -> VanTreesReport:
    """Per-period and cumulative regret floors using the analytic Fisher bound."""
    check_hard_instance_domain(alpha, rho)
    if isinstance(T, bool) or int(T) != T or T < 1:
        raise ParameterDomainError(f"T must be a positive integer, got {T}")
    if not (h > 0 and b > 0):
        raise ParameterDomainError(f"h and b must be positive, got h={h}, b={b}")
    T = int(T)
    curv = (h + b) * alpha
    hp = (2 / alpha - 2) ** 2
    info = 4 * math.pi**2 / (rho * (1 - rho))
    iq = prior_fisher(alpha)
    t = np.arange(1, T + 1, dtype=float)
    per = (curv / 2) * hp / (info * t + iq)
    return VanTreesReport(
        T, float(alpha), float(rho), float(h), float(b), per, math.fsum(per), curv, hp, info, iq, k6(rho, h, b)
    )


@dataclass
class BayesMSEResult:
    t: int
    reps: int
    mse: float
    se: float
    floor: float

    @property
    def passed(self) -> bool:
        return self.mse >= self.floor - 3 * self.se

    def to_dict(self):
        return {"t": self.t, "reps": self.reps, "mse": self.mse, "se": self.se, "floor": self.floor, "passed": self.passed}


def mse_floor(t: int, alpha: float, rho: float) -> float:
    """``(2/alpha - 2)^2 / (t I_1 + I(q))`` with the quadrature ``I_1``."""
    i1 = fisher_single(hard_instance_breakpoints(alpha, rho, 0.0))
    return (2 / alpha - 2) ** 2 / (t * i1 + prior_fisher(alpha))


def bayes_mse_check(policy: Policy, t: int, alpha: float, rho: float, reps: int = 5000, seed: int = 0) -> BayesMSEResult:
    """Monte Carlo Bayes MSE of ``policy`` against the van Trees floor.

    Replication ``k`` draws ``theta`` from the prior on stream ``(seed, k, 1)``
    and ``t`` demands from ``f(. | theta)`` on stream ``(seed, k, 0)``.
    """
    check_hard_instance_domain(alpha, rho)
    if reps < MIN_BAYES_REPS:
        raise ParameterDomainError(f"reps must be >= {MIN_BAYES_REPS}, got {reps}")
    if t < 1:
        raise ParameterDomainError(f"t must be >= 1, got {t}")
    err = np.empty(reps)
    for k in range(reps):
        theta = float(prior_sample(replication_rng(seed, k, THETA_STREAM), alpha))
        demand = HardInstanceDemand(alpha, rho, theta)
        d = demand.sample(replication_rng(seed, k, DEMAND_STREAM), t)
        err[k] = (policy.decide(d) - hard_instance_optimal(demand.params)) ** 2
    return BayesMSEResult(int(t), int(reps), float(err.mean()), float(err.std(ddof=1) / math.sqrt(reps)), mse_floor(t, alpha, rho))


def sweep(alpha: float, rho: float, n: int = THETA_GRID_POINTS) -> list[dict]:
    """Fisher information, its bounds and the score mean across the shift grid."""
    rows = []
    for th in theta_grid(alpha, n):
        p = hard_instance_breakpoints(alpha, rho, float(th))
        b1, b2 = fisher_upper_bounds(p)
        rows.append(
            {
                "theta": float(th),
                "fisher_single": fisher_single(p),
                "bound_bridge": b1,
                "bound_rho": b2,
                "score_mean": score_mean(p),
            }
        )
    return rows
