"""Demand distributions on a bounded interval.

Every model exposes exact pdf / cdf / quantile, the integrated cdf
``G(x) = int_0^x F(u) du`` (which gives closed-form expected newsvendor
costs), and inverse-cdf sampling. The inverted-hat family used for the
minimax lower bound lives here too, together with its prior over the shift
parameter and the score function.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ParameterDomainError

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200
MIN_SUPPORT_WIDTH = 1e-9


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


def bisect_increasing(func, target, lo, hi, tol=BISECT_TOL, max_iter=BISECT_MAX_ITER):
    """Vectorised left-inverse of a nondecreasing ``func``.

    Returns the (approximate) smallest ``x`` in ``[lo, hi]`` with
    ``func(x) >= target``, to absolute tolerance ``tol``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(max_iter):
        if target.size == 0 or np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        above = func(mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return hi


def newton_bracketed(func, deriv, target, lo, hi, tol=BISECT_TOL, max_iter=60):
    """Vectorised root of ``func(x) = target`` on ``[lo, hi]`` for increasing ``func``
    with positive ``deriv``; Newton steps that leave the bracket fall back to bisection.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        if target.size == 0:
            break
        r = func(x) - target
        below = r < 0
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        step = r / deriv(x)
        nxt = x - step
        bad = ~((nxt >= lo) & (nxt <= hi))
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        done = np.max(np.abs(nxt - x)) <= tol
        x = nxt
        if done:
            break
    return x


class DemandModel(ABC):
    """Continuous demand distribution supported on ``[lower_support, upper_support]``."""

    lower_support: float = 0.0

    @property
    @abstractmethod
    def upper_support(self) -> float:
        """Essential supremum of demand."""

    @abstractmethod
    def breakpoints(self) -> np.ndarray:
        """Sorted points between which the density is smooth (support ends included)."""

    @abstractmethod
    def pdf(self, x): ...

    @abstractmethod
    def cdf(self, x): ...

    @abstractmethod
    def cdf_integral(self, x):
        """``G(x) = int_0^x F(u) du``; equals ``E[(x - D)^+]`` for ``x >= 0``."""

    def mean(self) -> float:
        d_bar = self.upper_support
        return d_bar - float(self.cdf_integral(d_bar))

    def quantile(self, p):
        """Left quantile ``inf{x : F(x) >= p}`` by bisection on the cdf."""
        arr, scalar = _as_array(p)
        x = bisect_increasing(self.cdf, arr, self.lower_support, self.upper_support)
        x = np.where(arr <= 0.0, self.lower_support, x)
        return _ret(x, scalar)

    def sample(self, rng: np.random.Generator, size=None):
        return self.quantile(rng.random(size))

    def to_config(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# piecewise-constant densities (uniform, local-flat)


class PiecewiseConstantDemand(DemandModel):
    """Density equal to ``densities[i]`` on ``[knots[i], knots[i+1]]``."""

    def __init__(self, knots, densities):
        knots = np.asarray(knots, dtype=float)
        dens = np.asarray(densities, dtype=float)
        if knots.ndim != 1 or dens.shape != (knots.size - 1,):
            raise ParameterDomainError("need len(knots) == len(densities) + 1")
        if knots[0] < 0:
            raise ParameterDomainError("demand support must lie in [0, inf)")
        if np.any(np.diff(knots) < 0):
            raise ParameterDomainError("knots must be nondecreasing")
        if knots[-1] - knots[0] < MIN_SUPPORT_WIDTH:
            raise ParameterDomainError(
                f"support width {knots[-1] - knots[0]:.3g} is below {MIN_SUPPORT_WIDTH:g}"
            )
        if np.any(dens < 0):
            raise ParameterDomainError("densities must be nonnegative")
        mass = float(np.sum(dens * np.diff(knots)))
        if abs(mass - 1.0) > 1e-9:
            raise ParameterDomainError(f"densities integrate to {mass!r}, not 1")
        self._knots = knots
        self._dens = dens
        widths = np.diff(knots)
        self._F = np.concatenate([[0.0], np.cumsum(dens * widths)])
        self._F[-1] = 1.0
        g_steps = self._F[:-1] * widths + 0.5 * dens * widths**2
        self._G = np.concatenate([[0.0], np.cumsum(g_steps)])
        self.lower_support = float(knots[0])

    @property
    def upper_support(self) -> float:
        return float(self._knots[-1])

    def breakpoints(self):
        return self._knots.copy()

    def _piece(self, x):
        idx = np.searchsorted(self._knots, x, side="right") - 1
        return np.clip(idx, 0, self._dens.size - 1)

    def pdf(self, x):
        arr, scalar = _as_array(x)
        i = self._piece(arr)
        inside = (arr >= self._knots[0]) & (arr <= self._knots[-1])
        return _ret(np.where(inside, self._dens[i], 0.0), scalar)

    def cdf(self, x):
        arr, scalar = _as_array(x)
        i = self._piece(arr)
        u = np.clip(arr, self._knots[0], self._knots[-1]) - self._knots[i]
        return _ret(np.clip(self._F[i] + self._dens[i] * u, 0.0, 1.0), scalar)

    def cdf_integral(self, x):
        arr, scalar = _as_array(x)
        i = self._piece(arr)
        xc = np.clip(arr, self._knots[0], self._knots[-1])
        u = xc - self._knots[i]
        g = self._G[i] + self._F[i] * u + 0.5 * self._dens[i] * u * u
        g = g + np.maximum(arr - self._knots[-1], 0.0)
        return _ret(np.where(arr <= self._knots[0], 0.0, g), scalar)

    def quantile(self, p):
        arr, scalar = _as_array(p)
        pc = np.clip(arr, 0.0, 1.0)
        idx = np.searchsorted(self._F, pc, side="left") - 1
        i = np.clip(idx, 0, self._dens.size - 1)
        d = self._dens[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(d > 0, self._knots[i] + (pc - self._F[i]) / d, self._knots[i])
        x = np.where(pc <= 0.0, self._knots[0], np.minimum(x, self._knots[i + 1]))
        return _ret(x, scalar)


class UniformDemand(PiecewiseConstantDemand):
    """Uniform demand on ``[a, b_bar]``."""

    def __init__(self, a: float, b_bar: float):
        if not b_bar > a:
            raise ParameterDomainError(f"uniform demand needs a < b_bar, got a={a}, b_bar={b_bar}")
        if b_bar - a < MIN_SUPPORT_WIDTH:
            raise ParameterDomainError(f"support width {b_bar - a:.3g} is below {MIN_SUPPORT_WIDTH:g}")
        super().__init__([a, b_bar], [1.0 / (b_bar - a)])
        self.a = float(a)
        self.b_bar = float(b_bar)

    def to_config(self):
        return {"kind": "uniform", "a": self.a, "b_bar": self.b_bar}

    def __repr__(self):
        return f"UniformDemand(a={self.a}, b_bar={self.b_bar})"


class LocalFlatDemand(PiecewiseConstantDemand):
    """Demand on [0, 1] whose density equals ``alpha`` only within ``beta`` of 1/2.

    Layout: a block of height ``h_L`` on [0, 1/4], density ``outer_density``
    on the gap up to ``1/2 - beta``, exactly ``alpha`` on
    ``[1/2 - beta, 1/2 + beta]``, ``outer_density`` again up to 3/4 and a
    block ``h_R`` on [3/4, 1]. Block heights are chosen so that
    ``F(1/2) = rho``, making 1/2 the ``rho``-quantile.
    """

    def __init__(self, alpha: float, beta: float, rho: float, outer_density: float | None = None):
        if not 0 < rho < 1:
            raise ParameterDomainError(f"rho must lie in (0, 1), got {rho}")
        if not alpha > 0:
            raise ParameterDomainError(f"alpha must be positive, got {alpha}")
        if not 0 < beta <= 0.25:
            raise ParameterDomainError(f"beta must lie in (0, 1/4], got {beta}")
        delta = alpha * beta if outer_density is None else float(outer_density)
        if delta < 0:
            raise ParameterDomainError("outer_density must be nonnegative")
        gap = 0.25 - beta
        h_left = 4.0 * (rho - alpha * beta - delta * gap)
        h_right = 4.0 * (1.0 - rho - alpha * beta - delta * gap)
        if h_left < delta or h_right < delta:
            raise ParameterDomainError(
                "infeasible local-flat layout: need block heights "
                f"h_L={h_left:.6g}, h_R={h_right:.6g} >= outer_density={delta:.6g}"
            )
        knots = [0.0, 0.25, 0.5 - beta, 0.5 + beta, 0.75, 1.0]
        super().__init__(knots, [h_left, delta, alpha, delta, h_right])
        self.alpha, self.beta, self.rho = float(alpha), float(beta), float(rho)
        self.outer_density = delta
        self.h_left, self.h_right = h_left, h_right

    def to_config(self):
        return {
            "kind": "local_flat",
            "alpha": self.alpha,
            "beta": self.beta,
            "rho": self.rho,
            "outer_density": self.outer_density,
        }

    def __repr__(self):
        return f"LocalFlatDemand(alpha={self.alpha}, beta={self.beta}, rho={self.rho})"


# ---------------------------------------------------------------------------
# inverted-hat hard instance


@dataclass(frozen=True)
class HardInstanceParams:
    alpha: float
    rho: float
    theta: float
    l1: float
    l2: float
    r2: float
    r1: float
    w1: float
    w2: float

    @property
    def theta_max(self) -> float:
        return self.alpha / 20.0


def check_hard_instance_domain(alpha: float, rho: float) -> None:
    if not 0 < rho < 1:
        raise ParameterDomainError(f"rho must lie in (0, 1), got {rho}")
    limit = min(0.5, 2 * rho, 2 * (1 - rho))
    if not 0 < alpha <= limit:
        raise ParameterDomainError(
            f"alpha={alpha} violates the hard-instance validity condition "
            f"0 < alpha <= min(1/2, 2*rho, 2*(1-rho)) = {limit:g}"
        )


def hard_instance_breakpoints(alpha: float, rho: float, theta: float = 0.0) -> HardInstanceParams:
    check_hard_instance_domain(alpha, rho)
    bound = alpha / 20.0
    if abs(theta) > bound * (1 + 1e-12):
        raise ParameterDomainError(f"theta={theta} outside [-alpha/20, alpha/20] = [{-bound}, {bound}]")
    l1 = (4 * rho - alpha) / (16 - 8 * alpha) + theta
    l2 = l1 + rho / 2
    r2 = l2 + 0.25
    r1 = r2 + (1 - rho) / 2
    return HardInstanceParams(
        alpha=float(alpha),
        rho=float(rho),
        theta=float(theta),
        l1=l1,
        l2=l2,
        r2=r2,
        r1=r1,
        w1=2 * math.pi / rho,
        w2=2 * math.pi / (1 - rho),
    )


def _hi_knot_cdf(p: HardInstanceParams):
    """cdf at 0, l1, l2, r2, r1, 1."""
    a = p.alpha
    f_l1 = (2 - a) * p.l1
    f_l2 = f_l1 + p.rho / 2
    f_r2 = f_l2 + a / 4
    f_r1 = f_r2 + (1 - p.rho) / 2
    return np.array([0.0, f_l1, f_l2, f_r2, f_r1, 1.0])


def _hi_knot_cdf_integral(p: HardInstanceParams):
    a = p.alpha
    F = _hi_knot_cdf(p)
    wl, wm, wr = p.rho / 2, 0.25, (1 - p.rho) / 2
    g_l1 = 0.5 * (2 - a) * p.l1**2
    # bridges integrate the cosine over a half period: the sine term vanishes,
    # leaving (1 - alpha) * 2 / w^2 from the (1 - cos) antiderivative
    g_l2 = g_l1 + F[1] * wl + 0.5 * wl**2 + (1 - a) * 2 / p.w1**2
    g_r2 = g_l2 + F[2] * wm + 0.5 * a * wm**2
    g_r1 = g_r2 + F[3] * wr + 0.5 * wr**2 - (1 - a) * 2 / p.w2**2
    u = 1.0 - p.r1
    g_1 = g_r1 + F[4] * u + 0.5 * (2 - a) * u**2
    return np.array([0.0, g_l1, g_l2, g_r2, g_r1, g_1])


def _hi_pdf_scalar(x: float, p: HardInstanceParams) -> float:
    a = p.alpha
    if x < 0 or x > 1:
        return 0.0
    if x <= p.l1:
        return 2 - a
    if x <= p.l2:
        return a + (1 - a) * (math.cos(p.w1 * (x - p.l1)) + 1)
    if x <= p.r2:
        return a
    if x <= p.r1:
        return a + (1 - a) * (math.cos(p.w2 * (p.r1 - x)) + 1)
    return 2 - a


def _hi_dtheta_scalar(x: float, p: HardInstanceParams) -> float:
    a = p.alpha
    if p.l1 <= x <= p.l2:
        return (1 - a) * p.w1 * math.sin(p.w1 * (x - p.l1))
    if p.r2 <= x <= p.r1:
        return -(1 - a) * p.w2 * math.sin(p.w2 * (p.r1 - x))
    return 0.0


def hard_instance_pdf(x, params: HardInstanceParams):
    # plain floats take a math-only path; quadrature calls this point by point
    if isinstance(x, float):
        return _hi_pdf_scalar(x, params)
    arr, scalar = _as_array(x)
    a, p = params.alpha, params
    left_bridge = a + (1 - a) * (np.cos(p.w1 * (arr - p.l1)) + 1)
    right_bridge = a + (1 - a) * (np.cos(p.w2 * (p.r1 - arr)) + 1)
    out = np.select(
        [
            (arr < 0) | (arr > 1),
            arr <= p.l1,
            arr <= p.l2,
            arr <= p.r2,
            arr <= p.r1,
        ],
        [0.0, 2 - a, left_bridge, a, right_bridge],
        default=2 - a,
    )
    return _ret(out, scalar)


def hard_instance_cdf(x, params: HardInstanceParams):
    arr, scalar = _as_array(x)
    p, a = params, params.alpha
    F = _hi_knot_cdf(p)
    xc = np.clip(arr, 0.0, 1.0)
    ul = xc - p.l1
    um = xc - p.l2
    ur = xc - p.r2
    u1 = xc - p.r1
    out = np.select(
        [xc <= p.l1, xc <= p.l2, xc <= p.r2, xc <= p.r1],
        [
            (2 - a) * xc,
            F[1] + ul + (1 - a) * np.sin(p.w1 * ul) / p.w1,
            F[2] + a * um,
            F[3] + ur - (1 - a) * np.sin(p.w2 * ur) / p.w2,
        ],
        default=F[4] + (2 - a) * u1,
    )
    return _ret(np.clip(out, 0.0, 1.0), scalar)


def hard_instance_cdf_integral(x, params: HardInstanceParams):
    arr, scalar = _as_array(x)
    p, a = params, params.alpha
    F = _hi_knot_cdf(p)
    G = _hi_knot_cdf_integral(p)
    xc = np.clip(arr, 0.0, 1.0)
    ul = xc - p.l1
    um = xc - p.l2
    ur = xc - p.r2
    u1 = xc - p.r1
    out = np.select(
        [xc <= p.l1, xc <= p.l2, xc <= p.r2, xc <= p.r1],
        [
            0.5 * (2 - a) * xc * xc,
            G[1] + F[1] * ul + 0.5 * ul * ul + (1 - a) * (1 - np.cos(p.w1 * ul)) / p.w1**2,
            G[2] + F[2] * um + 0.5 * a * um * um,
            G[3] + F[3] * ur + 0.5 * ur * ur - (1 - a) * (1 - np.cos(p.w2 * ur)) / p.w2**2,
        ],
        default=G[4] + F[4] * u1 + 0.5 * (2 - a) * u1 * u1,
    )
    out = out + np.maximum(arr - 1.0, 0.0)
    return _ret(np.where(arr <= 0, 0.0, out), scalar)


def hard_instance_quantile(q, params: HardInstanceParams):
    """Closed form on the three flat pieces, safeguarded Newton inside the cosine bridges."""
    arr, scalar = _as_array(q)
    p, a = params, params.alpha
    F = _hi_knot_cdf(p)
    pc = np.clip(arr, 0.0, 1.0)
    piece = np.clip(np.searchsorted(F, pc, side="left") - 1, 0, 4)
    x = np.empty_like(pc)

    m = piece == 0
    x[m] = pc[m] / (2 - a)
    m = piece == 2
    x[m] = p.l2 + (pc[m] - F[2]) / a
    m = piece == 4
    x[m] = p.r1 + (pc[m] - F[4]) / (2 - a)

    cdf = lambda v: hard_instance_cdf(v, params)  # noqa: E731
    pdf = lambda v: hard_instance_pdf(v, params)  # noqa: E731
    m = piece == 1
    if np.any(m):
        x[m] = newton_bracketed(cdf, pdf, pc[m], p.l1, p.l2)
    m = piece == 3
    if np.any(m):
        x[m] = newton_bracketed(cdf, pdf, pc[m], p.r2, p.r1)
    return _ret(np.clip(x, 0.0, 1.0), scalar)


def hard_instance_optimal(params: HardInstanceParams) -> float:
    """Closed-form ``rho``-quantile of the hard instance (it lies in the flat middle piece)."""
    a, rho = params.alpha, params.rho
    return rho / 2 + (4 * rho - a) / (16 - 8 * a) + 1 / 8 - (2 / a - 2) * params.theta


def hard_instance_dtheta(x, params: HardInstanceParams):
    """Partial derivative of the density in the shift parameter."""
    if isinstance(x, float):
        return _hi_dtheta_scalar(x, params)
    arr, scalar = _as_array(x)
    p, a = params, params.alpha
    out = np.select(
        [
            (arr >= p.l1) & (arr <= p.l2),
            (arr >= p.r2) & (arr <= p.r1),
        ],
        [
            (1 - a) * p.w1 * np.sin(p.w1 * (arr - p.l1)),
            -(1 - a) * p.w2 * np.sin(p.w2 * (p.r1 - arr)),
        ],
        default=0.0,
    )
    return _ret(out, scalar)


def score(x, params: HardInstanceParams):
    """d/dtheta log f(x | theta); zero off the two bridges and outside [0, 1]."""
    if isinstance(x, float):
        den = _hi_pdf_scalar(x, params)
        return _hi_dtheta_scalar(x, params) / den if den > 0 else 0.0
    arr, scalar = _as_array(x)
    num = hard_instance_dtheta(arr, params)
    den = hard_instance_pdf(arr, params)
    out = np.divide(num, den, out=np.zeros_like(arr), where=den > 0)
    return _ret(out, scalar)


class HardInstanceDemand(DemandModel):
    """The inverted-hat density with cosine bridges, shifted by ``theta``."""

    def __init__(self, alpha: float, rho: float, theta: float = 0.0):
        self.params = hard_instance_breakpoints(alpha, rho, theta)

    @classmethod
    def from_params(cls, params: HardInstanceParams) -> "HardInstanceDemand":
        obj = cls.__new__(cls)
        obj.params = params
        return obj

    @property
    def upper_support(self) -> float:
        return 1.0

    def breakpoints(self):
        p = self.params
        return np.array([0.0, p.l1, p.l2, p.r2, p.r1, 1.0])

    def pdf(self, x):
        return hard_instance_pdf(x, self.params)

    def cdf(self, x):
        return hard_instance_cdf(x, self.params)

    def cdf_integral(self, x):
        return hard_instance_cdf_integral(x, self.params)

    def quantile(self, p):
        return hard_instance_quantile(p, self.params)

    def optimal(self) -> float:
        return hard_instance_optimal(self.params)

    def to_config(self):
        p = self.params
        return {"kind": "hard_instance", "alpha": p.alpha, "rho": p.rho, "theta": p.theta}

    def __repr__(self):
        p = self.params
        return f"HardInstanceDemand(alpha={p.alpha}, rho={p.rho}, theta={p.theta})"


# ---------------------------------------------------------------------------
# prior over the shift parameter


def _prior_phase(arr, alpha: float):
    # shared by pdf and derivative so that ratios like q'/q cancel exactly near the endpoints
    return 10 * np.pi * arr / alpha


def prior_pdf(theta, alpha: float):
    """Raised-cosine prior ``(20/alpha) cos^2(10 pi theta / alpha)`` on ``[-alpha/20, alpha/20]``."""
    arr, scalar = _as_array(theta)
    dens = (20.0 / alpha) * np.cos(_prior_phase(arr, alpha)) ** 2
    return _ret(np.where(np.abs(arr) <= alpha / 20.0, dens, 0.0), scalar)


def prior_dpdf(theta, alpha: float):
    arr, scalar = _as_array(theta)
    ph = _prior_phase(arr, alpha)
    d = -(20.0 / alpha) * (20 * np.pi / alpha) * np.cos(ph) * np.sin(ph)
    return _ret(np.where(np.abs(arr) <= alpha / 20.0, d, 0.0), scalar)


def prior_cdf(theta, alpha: float):
    arr, scalar = _as_array(theta)
    bound = alpha / 20.0
    tc = np.clip(arr, -bound, bound)
    out = 0.5 + 10.0 * tc / alpha + np.sin(20 * np.pi * tc / alpha) / (2 * np.pi)
    return _ret(np.clip(out, 0.0, 1.0), scalar)


def prior_sample(rng: np.random.Generator, alpha: float, size=None):
    u = rng.random(size)
    arr, scalar = _as_array(u)
    bound = alpha / 20.0
    th = bisect_increasing(lambda t: prior_cdf(t, alpha), arr, -bound, bound)
    return _ret(th, scalar)


# ---------------------------------------------------------------------------


def demand_from_config(record: Mapping) -> DemandModel:
    """Build a demand model from a ``{"kind": ..., <params>}`` record."""
    kind = record.get("kind")
    params = {k: v for k, v in record.items() if k != "kind"}
    builders = {
        "uniform": (UniformDemand, {"a", "b_bar"}, set()),
        "hard_instance": (HardInstanceDemand, {"alpha", "rho"}, {"theta"}),
        "local_flat": (LocalFlatDemand, {"alpha", "beta", "rho"}, {"outer_density"}),
    }
    if kind not in builders:
        raise ParameterDomainError(f"unknown demand kind {kind!r}; expected one of {sorted(builders)}")
    cls, required, optional = builders[kind]
    missing = required - params.keys()
    if missing:
        raise ParameterDomainError(f"demand kind {kind!r} is missing {sorted(missing)}")
    extra = params.keys() - required - optional
    if extra:
        raise ParameterDomainError(f"demand kind {kind!r} got unknown keys {sorted(extra)}")
    for k, v in params.items():
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ParameterDomainError(f"demand parameter {k!r} must be numeric, got {v!r}")
    return cls(**params)
