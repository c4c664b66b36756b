"""Ordering policies that map a demand history to an order quantity.

Convention: the decision for period ``t`` sees the ``t`` demands
``d_1 .. d_t``. ``Policy.path`` returns the whole decision sequence for one
demand stream and is what the Monte Carlo engine calls; ``decide`` answers a
single history and is what tests and one-off checks use.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numba
import numpy as np

from .cost import CostModel, LinearCost
from .demand import DemandModel
from .errors import EmptyHistoryError, ParameterDomainError

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200
# float round-off allowance when testing the sign of an empirical subgradient
SIGN_EPS = 1e-12


def _history(history) -> np.ndarray:
    h = np.asarray(history, dtype=float).ravel()
    if h.size == 0:
        raise EmptyHistoryError("demand history is empty")
    return h


def left_rank(h: float, b: float, t: int) -> int:
    """``ceil(rho * t)`` with ``rho = b / (h + b)``, computed exactly."""
    return math.ceil(Fraction(b) * t / (Fraction(h) + Fraction(b)))


def left_ranks(h: float, b: float, horizon: int) -> np.ndarray:
    """``left_rank`` for ``t = 1 .. horizon``."""
    t = np.arange(1, horizon + 1, dtype=np.int64)
    rho = Fraction(b) / (Fraction(h) + Fraction(b))
    num, den = rho.numerator, rho.denominator
    if num * horizon < 2**62:
        return -((-num * t) // den)
    prod = float(rho) * t
    ks = np.ceil(prod).astype(np.int64)
    for i in np.flatnonzero(np.abs(prod - np.rint(prod)) < 1e-6):
        ks[i] = left_rank(h, b, int(t[i]))
    return ks


@numba.njit(cache=True)
def _running_kth(ranks, ks):
    """Rank of the ``ks[t]``-th smallest among the first ``t + 1`` entries, for every ``t``.

    ``ranks`` is a permutation of ``1..T``; a Fenwick tree over ranks gives
    O(log T) insertion and k-th-smallest lookup.
    """
    n = ranks.size
    tree = np.zeros(n + 1, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    top = 1
    while top * 2 <= n:
        top *= 2
    for t in range(n):
        i = ranks[t]
        while i <= n:
            tree[i] += 1
            i += i & (-i)
        k = ks[t]
        if k <= 0:
            out[t] = 0
            continue
        pos = 0
        rem = k
        step = top
        while step > 0:
            nxt = pos + step
            if nxt <= n and tree[nxt] < rem:
                pos = nxt
                rem -= tree[nxt]
            step //= 2
        out[t] = pos + 1
    return out


def running_order_statistic(demands, ks) -> np.ndarray:
    """``x[t] = ks[t]``-th order statistic of ``demands[:t+1]`` (0 where ``ks[t] == 0``)."""
    d = np.asarray(demands, dtype=float)
    order = np.argsort(d, kind="stable")
    ranks = np.empty(d.size, dtype=np.int64)
    ranks[order] = np.arange(1, d.size + 1)
    pos = _running_kth(ranks, np.asarray(ks, dtype=np.int64))
    sorted_d = np.concatenate([[0.0], d[order]])
    return sorted_d[pos]


# ---------------------------------------------------------------------------
# single-history decision rules


def saa_decide(history, cost: CostModel) -> float:
    """Smallest minimiser of the sample-average cost over ``x >= 0``.

    Linear cost: the ``ceil(rho t)``-th order statistic. Otherwise bisect
    the nondecreasing empirical subgradient on ``[0, max(history)]`` and snap
    to the kink that carries the sign change, if there is one.
    """
    h = _history(history)
    t = h.size
    if isinstance(cost, LinearCost):
        k = left_rank(cost.h, cost.b, t)
        return 0.0 if k == 0 else float(np.partition(h, k - 1)[k - 1])

    def g_hat(x):
        return float(np.mean(cost.subgradient(x, h)))

    if g_hat(0.0) >= -SIGN_EPS:
        return 0.0
    lo, hi = 0.0, float(h.max())
    if g_hat(hi) < -SIGN_EPS:
        return hi
    for _ in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if g_hat(mid) >= -SIGN_EPS:
            hi = mid
        else:
            lo = mid
    kinks = cost.x_kinks(h)
    for k in np.sort(kinks[(kinks >= lo) & (kinks <= hi)]):
        if g_hat(float(k)) >= -SIGN_EPS:
            return float(k)
    return hi


def mle_uniform_decide(history, rho: float) -> float:
    """``(1 - rho) * min(history) + rho * max(history)``."""
    if not 0.0 <= rho <= 1.0:
        raise ParameterDomainError(f"rho must lie in [0, 1], got {rho}")
    h = _history(history)
    lo, hi = h.min(), h.max()
    if lo == hi:
        return float(lo)
    return float((1.0 - rho) * lo + rho * hi)


@dataclass(frozen=True)
class SGDState:
    x: float  # current iterate x_t
    t: int  # its period index, starting at 1


def sgd_initial_state(d_bar: float) -> SGDState:
    return SGDState(x=0.5 * d_bar, t=1)


def sgd_decide(state: SGDState, new_sample: float, cost: CostModel, alpha: float, d_bar: float):
    """One projected subgradient step with step size ``1 / (alpha t)``.

    Returns ``(x_{t+1}, new_state)``.
    """
    if not alpha > 0:
        raise ParameterDomainError(f"SGD step parameter alpha must be positive, got {alpha}")
    if not d_bar > 0:
        raise ParameterDomainError(f"d_bar must be positive, got {d_bar}")
    step = 1.0 / (alpha * state.t)
    x = state.x - step * float(cost.subgradient(state.x, new_sample))
    x = min(max(x, 0.0), d_bar)
    return x, SGDState(x=x, t=state.t + 1)


# ---------------------------------------------------------------------------
# policy objects


class Policy(ABC):
    name: str

    @abstractmethod
    def decide(self, history) -> float: ...

    def path(self, demands) -> np.ndarray:
        """Decisions for periods ``1..T`` given the full demand stream."""
        d = np.asarray(demands, dtype=float)
        return np.array([self.decide(d[: t + 1]) for t in range(d.size)])

    @abstractmethod
    def to_config(self) -> dict: ...


class SAAPolicy(Policy):
    name = "saa"

    def __init__(self, cost: CostModel):
        self.cost = cost

    def decide(self, history):
        return saa_decide(history, self.cost)

    def path(self, demands):
        d = np.asarray(demands, dtype=float)
        if isinstance(self.cost, LinearCost):
            return running_order_statistic(d, left_ranks(self.cost.h, self.cost.b, d.size))
        return super().path(d)

    def to_config(self):
        return {"kind": "saa"}


class SGDPolicy(Policy):
    """Projected SGD; the period-``t`` order uses ``d_1 .. d_{t-1}``."""

    name = "sgd"

    def __init__(self, cost: CostModel, alpha: float, d_bar: float):
        if not alpha > 0:
            raise ParameterDomainError(f"SGD step parameter alpha must be positive, got {alpha}")
        if not d_bar > 0:
            raise ParameterDomainError(f"d_bar must be positive, got {d_bar}")
        self.cost, self.alpha, self.d_bar = cost, float(alpha), float(d_bar)

    def decide(self, history):
        h = _history(history)
        return float(self.path(h)[-1])

    def path(self, demands):
        d = np.asarray(demands, dtype=float)
        out = np.empty(d.size)
        state = sgd_initial_state(self.d_bar)
        for t in range(d.size):
            out[t] = state.x
            _, state = sgd_decide(state, d[t], self.cost, self.alpha, self.d_bar)
        return out

    def to_config(self):
        return {"kind": "sgd", "alpha": self.alpha, "d_bar": self.d_bar}


class MLEUniformPolicy(Policy):
    name = "mle_uniform"

    def __init__(self, rho: float):
        if not 0.0 <= rho <= 1.0:
            raise ParameterDomainError(f"rho must lie in [0, 1], got {rho}")
        self.rho = float(rho)

    def decide(self, history):
        return mle_uniform_decide(history, self.rho)

    def path(self, demands):
        d = np.asarray(demands, dtype=float)
        lo = np.minimum.accumulate(d)
        hi = np.maximum.accumulate(d)
        return np.where(lo == hi, lo, (1.0 - self.rho) * lo + self.rho * hi)

    def to_config(self):
        return {"kind": "mle_uniform", "rho": self.rho}


class ConstantPolicy(Policy):
    """Orders the same quantity every period (the clairvoyant policy when ``x = x*``)."""

    name = "constant"

    def __init__(self, x: float):
        self.x = float(x)

    def decide(self, history):
        return self.x

    def path(self, demands):
        return np.full(np.asarray(demands).size, self.x)

    def to_config(self):
        return {"kind": "constant", "x": self.x}


def policy_from_config(record: Mapping, cost: CostModel, demand: DemandModel) -> Policy:
    """Build a policy; ``clairvoyant`` resolves to a constant order at the true optimum."""
    from .cost import optimal_quantity

    kind = record.get("kind")
    params = {k: v for k, v in record.items() if k != "kind"}
    allowed = {
        "saa": set(),
        "sgd": {"alpha", "d_bar"},
        "mle_uniform": {"rho"},
        "clairvoyant": set(),
        "constant": {"x"},
    }
    if kind not in allowed:
        raise ParameterDomainError(f"unknown policy kind {kind!r}; expected one of {sorted(allowed)}")
    extra = params.keys() - allowed[kind]
    if extra:
        raise ParameterDomainError(f"policy kind {kind!r} got unknown keys {sorted(extra)}")
    if kind == "saa":
        return SAAPolicy(cost)
    if kind == "sgd":
        if "alpha" not in params:
            raise ParameterDomainError("policy kind 'sgd' is missing ['alpha']")
        return SGDPolicy(cost, params["alpha"], params.get("d_bar", demand.upper_support))
    if kind == "mle_uniform":
        if "rho" in params:
            return MLEUniformPolicy(params["rho"])
        if not isinstance(cost, LinearCost):
            raise ParameterDomainError("mle_uniform needs 'rho' unless the cost is linear")
        return MLEUniformPolicy(cost.rho)
    if kind == "clairvoyant":
        return ConstantPolicy(optimal_quantity(cost, demand))
    if "x" not in params:
        raise ParameterDomainError("policy kind 'constant' is missing ['x']")
    return ConstantPolicy(params["x"])
