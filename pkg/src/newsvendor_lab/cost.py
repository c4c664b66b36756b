"""Per-period newsvendor cost models.

Each model gives the sample cost ``c(x, d)``, a right-continuous element of
its subdifferential in ``x``, and closed-form expected cost / gradient under
any :class:`~newsvendor_lab.demand.DemandModel` (through ``F`` and
``G(x) = E[(x - D)^+]``). A quadrature route that integrates ``c(x, d) f(d)``
directly is kept alongside as an independent check.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Mapping, Sequence

import numpy as np

from .demand import DemandModel, _as_array, _ret, bisect_increasing
from .errors import EmptyHistoryError, ParameterDomainError
from .quadrature import integrate_piecewise

QUAD_TOL = 1e-10


def _history(history) -> np.ndarray:
    h = np.asarray(history, dtype=float).ravel()
    if h.size == 0:
        raise EmptyHistoryError("demand history is empty")
    return h


class CostModel(ABC):
    #: sup of |c'(x, d)| over the bounded domain
    gradient_bound: float
    #: slack constant C1 with |g_hat_t(x_hat_t)| <= C1 / sqrt(t)
    saa_slack: float

    @abstractmethod
    def cost(self, x, d): ...

    @abstractmethod
    def subgradient(self, x, d): ...

    @abstractmethod
    def expected_cost(self, x, demand: DemandModel): ...

    @abstractmethod
    def expected_gradient(self, x, demand: DemandModel): ...

    @abstractmethod
    def kinks(self, x: float) -> list[float]:
        """Demand values at which ``c(x, .)`` is not smooth."""

    @abstractmethod
    def x_kinks(self, d) -> np.ndarray:
        """Order quantities at which ``c(., d)`` has a kink, for each demand in ``d``."""

    @abstractmethod
    def to_config(self) -> dict: ...

    def empirical_cost(self, x, history):
        """Sample-average cost over ``history``; vectorised in ``x``."""
        h = _history(history)
        arr, scalar = _as_array(x)
        vals = self.cost(arr[..., None], h).mean(axis=-1)
        return _ret(vals, scalar)

    def empirical_subgradient(self, x, history):
        h = _history(history)
        arr, scalar = _as_array(x)
        vals = self.subgradient(arr[..., None], h).mean(axis=-1)
        return _ret(vals, scalar)


class LinearCost(CostModel):
    """``h (x - d)^+ + b (d - x)^+``."""

    def __init__(self, h: float, b: float):
        if h < 0 or b < 0 or h + b <= 0:
            raise ParameterDomainError(f"need h, b >= 0 with h + b > 0, got h={h}, b={b}")
        self.h = float(h)
        self.b = float(b)
        self.gradient_bound = max(self.h, self.b)
        self.saa_slack = self.h + self.b

    @property
    def rho(self) -> float:
        return self.b / (self.h + self.b)

    def cost(self, x, d):
        diff = np.asarray(x, dtype=float) - d
        return self.h * np.maximum(diff, 0.0) + self.b * np.maximum(-diff, 0.0)

    def subgradient(self, x, d):
        # h at the kink keeps the empirical subgradient right-continuous
        return np.where(np.asarray(x, dtype=float) >= d, self.h, -self.b)

    def expected_cost(self, x, demand):
        arr, scalar = _as_array(x)
        hb = self.h + self.b
        val = hb * demand.cdf_integral(arr) - self.b * arr + self.b * demand.mean()
        return _ret(val, scalar)

    def expected_gradient(self, x, demand):
        arr, scalar = _as_array(x)
        return _ret((self.h + self.b) * demand.cdf(arr) - self.b, scalar)

    def kinks(self, x):
        return [float(x)]

    def x_kinks(self, d):
        return np.asarray(d, dtype=float).ravel()

    def to_config(self):
        return {"kind": "linear", "h": self.h, "b": self.b}

    def __repr__(self):
        return f"LinearCost(h={self.h}, b={self.b})"


def _check_slopes(name: str, pieces) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pieces, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ParameterDomainError(f"{name} must be a nonempty list of [breakpoint, slope] pairs")
    bps, slopes = arr[:, 0], arr[:, 1]
    if bps[0] != 0.0:
        raise ParameterDomainError(f"{name}: first breakpoint must be 0")
    if np.any(np.diff(bps) <= 0):
        raise ParameterDomainError(f"{name}: breakpoints must be strictly increasing")
    if np.any(slopes < 0):
        raise ParameterDomainError(f"{name}: slopes must be nonnegative")
    if np.any(np.diff(slopes) < 0):
        raise ParameterDomainError(f"{name}: slopes must be nondecreasing (convexity)")
    return bps, slopes


class ConvexPiecewiseCost(CostModel):
    """``h_f((x - d)^+) + b_f((d - x)^+)`` with piecewise-linear convex ``h_f, b_f``.

    ``overage`` and ``underage`` are lists of ``(breakpoint, slope)`` pairs
    starting at breakpoint 0; slope ``s_j`` applies from breakpoint ``u_j``
    up to the next one.
    """

    def __init__(self, overage: Sequence[Sequence[float]], underage: Sequence[Sequence[float]]):
        self._u, self._hs = _check_slopes("overage", overage)
        self._v, self._bs = _check_slopes("underage", underage)
        if self._hs[0] + self._bs[0] <= 0:
            raise ParameterDomainError("overage and underage slopes at 0 cannot both vanish")
        # hinge decomposition h_f(u) = sum_j dh_j (u - u_j)^+
        self._dh = np.diff(self._hs, prepend=0.0)
        self._db = np.diff(self._bs, prepend=0.0)
        self.gradient_bound = float(max(self._hs[-1], self._bs[-1]))
        jumps = [self._hs[0] + self._bs[0], *self._dh[1:], *self._db[1:]]
        self.saa_slack = float(max(jumps))

    def _h_f(self, u):
        return np.sum(self._dh * np.maximum(u[..., None] - self._u, 0.0), axis=-1)

    def _b_f(self, v):
        return np.sum(self._db * np.maximum(v[..., None] - self._v, 0.0), axis=-1)

    def cost(self, x, d):
        diff = np.asarray(np.asarray(x, dtype=float) - d)
        return self._h_f(np.maximum(diff, 0.0)) + self._b_f(np.maximum(-diff, 0.0))

    def subgradient(self, x, d):
        diff = np.asarray(np.asarray(x, dtype=float) - d)
        over = np.sum(self._dh * (diff[..., None] >= self._u), axis=-1)
        under = np.sum(self._db * (-diff[..., None] > self._v), axis=-1)
        return np.where(diff >= 0, over, -under)

    def expected_cost(self, x, demand):
        arr, scalar = _as_array(x)
        mean = demand.mean()
        total = np.zeros_like(arr)
        for du, u in zip(self._dh, self._u):
            total = total + du * demand.cdf_integral(arr - u)
        for dv, v in zip(self._db, self._v):
            y = arr + v
            total = total + dv * (mean - y + demand.cdf_integral(y))
        return _ret(total, scalar)

    def expected_gradient(self, x, demand):
        arr, scalar = _as_array(x)
        total = np.zeros_like(arr)
        for du, u in zip(self._dh, self._u):
            total = total + du * demand.cdf(arr - u)
        for dv, v in zip(self._db, self._v):
            total = total - dv * (1.0 - demand.cdf(arr + v))
        return _ret(total, scalar)

    def kinks(self, x):
        return [float(x - u) for u in self._u] + [float(x + v) for v in self._v[1:]]

    def x_kinks(self, d):
        d = np.asarray(d, dtype=float).ravel()
        return np.concatenate([(d[:, None] + self._u).ravel(), (d[:, None] - self._v[1:]).ravel()])

    def to_config(self):
        return {
            "kind": "piecewise",
            "overage": [[float(u), float(s)] for u, s in zip(self._u, self._hs)],
            "underage": [[float(v), float(s)] for v, s in zip(self._v, self._bs)],
        }

    def __repr__(self):
        return f"ConvexPiecewiseCost(overage={self.to_config()['overage']}, underage={self.to_config()['underage']})"


class QuadraticProductionCost(CostModel):
    """``kappa x^2 - p min(x, d)``: quadratic production cost net of sales revenue.

    ``d_bar`` bounds the decision domain and enters only the gradient bound.
    """

    def __init__(self, kappa: float, p: float, d_bar: float = 1.0):
        if kappa <= 0 or p < 0 or d_bar <= 0:
            raise ParameterDomainError(f"need kappa > 0, p >= 0, d_bar > 0; got {kappa}, {p}, {d_bar}")
        self.kappa, self.p, self.d_bar = float(kappa), float(p), float(d_bar)
        self.gradient_bound = max(0.0, 2 * self.kappa * self.d_bar + self.p)
        self.saa_slack = self.p

    def cost(self, x, d):
        x = np.asarray(x, dtype=float)
        return self.kappa * x * x - self.p * np.minimum(x, d)

    def subgradient(self, x, d):
        x = np.asarray(x, dtype=float)
        return 2 * self.kappa * x - self.p * (x < d)

    def expected_cost(self, x, demand):
        arr, scalar = _as_array(x)
        return _ret(self.kappa * arr * arr - self.p * (arr - demand.cdf_integral(arr)), scalar)

    def expected_gradient(self, x, demand):
        arr, scalar = _as_array(x)
        return _ret(2 * self.kappa * arr - self.p * (1.0 - demand.cdf(arr)), scalar)

    def kinks(self, x):
        return [float(x)]

    def x_kinks(self, d):
        return np.asarray(d, dtype=float).ravel()

    def to_config(self):
        return {"kind": "production", "kappa": self.kappa, "p": self.p, "d_bar": self.d_bar}

    def __repr__(self):
        return f"QuadraticProductionCost(kappa={self.kappa}, p={self.p})"


# ---------------------------------------------------------------------------


def _quad_breaks(x: float, cost: CostModel, demand: DemandModel) -> list[float]:
    lo, hi = demand.lower_support, demand.upper_support
    pts = [float(b) for b in demand.breakpoints()] + cost.kinks(x)
    return [p for p in pts if lo <= p <= hi] + [lo, hi]


def true_expected_cost(x, cost: CostModel, demand: DemandModel, method: str = "closed"):
    """``C(x) = E[c(x, D)]``.

    ``method="closed"`` uses the cost model's closed form; ``"quadrature"``
    integrates ``c(x, d) f(d)`` piece by piece (scalar ``x`` only).
    """
    if method == "closed":
        return cost.expected_cost(x, demand)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    xf = float(x)
    return integrate_piecewise(
        lambda d: float(cost.cost(xf, d) * demand.pdf(d)), _quad_breaks(xf, cost, demand), QUAD_TOL
    )


def true_gradient(x, cost: CostModel, demand: DemandModel, method: str = "closed"):
    """``g(x) = C'(x)``, closed form or by quadrature of ``c'(x, d) f(d)``."""
    if method == "closed":
        return cost.expected_gradient(x, demand)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    xf = float(x)
    return integrate_piecewise(
        lambda d: float(cost.subgradient(xf, d) * demand.pdf(d)), _quad_breaks(xf, cost, demand), QUAD_TOL
    )


def optimal_quantity(cost: CostModel, demand: DemandModel) -> float:
    """Smallest minimiser of ``C`` on ``[0, D_bar]``."""
    if isinstance(cost, LinearCost):
        return float(demand.quantile(cost.rho))
    d_bar = demand.upper_support
    if cost.expected_gradient(0.0, demand) >= 0:
        return 0.0
    if cost.expected_gradient(d_bar, demand) < 0:
        return d_bar
    return float(bisect_increasing(lambda v: cost.expected_gradient(v, demand), 0.0, 0.0, d_bar))


def cost_from_config(record: Mapping) -> CostModel:
    kind = record.get("kind")
    params = {k: v for k, v in record.items() if k != "kind"}
    builders = {
        "linear": (LinearCost, {"h", "b"}, set()),
        "piecewise": (ConvexPiecewiseCost, {"overage", "underage"}, set()),
        "production": (QuadraticProductionCost, {"kappa", "p"}, {"d_bar"}),
    }
    if kind not in builders:
        raise ParameterDomainError(f"unknown cost kind {kind!r}; expected one of {sorted(builders)}")
    cls, required, optional = builders[kind]
    missing = required - params.keys()
    if missing:
        raise ParameterDomainError(f"cost kind {kind!r} is missing {sorted(missing)}")
    extra = params.keys() - required - optional
    if extra:
        raise ParameterDomainError(f"cost kind {kind!r} got unknown keys {sorted(extra)}")
    return cls(**params)


def critical_fractile(h: float, b: float) -> float:
    return b / (h + b)


def finite_difference(f, x: float, step: float = 1e-5) -> float:
    return (f(x + step) - f(x - step)) / (2 * step)

