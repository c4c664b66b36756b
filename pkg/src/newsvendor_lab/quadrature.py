"""Adaptive Simpson quadrature for piecewise-smooth integrands.

Integrals are always split at caller-supplied breakpoints so that every
panel sees a smooth function; the adaptive refinement then only has to
resolve curvature, never kinks.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

DEFAULT_TOL = 1e-10
ROUNDOFF_ULPS = 64


def _simpson(fa: float, fm: float, fb: float, width: float) -> float:
    return width * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = 48,
    min_depth: int = 3,
) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Uses an explicit stack instead of recursion. The first ``min_depth``
    levels are always subdivided so periodic integrands cannot fool the
    error estimate on the initial panel.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth, min_depth)

    fa, fb = float(f(a)), float(f(b))
    m = 0.5 * (a + b)
    fm = float(f(m))
    whole = _simpson(fa, fm, fb, b - a)

    total = 0.0
    compensation = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a_, b_, fa_, fm_, fb_, s, eps, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm = 0.5 * (a_ + m_)
        rm = 0.5 * (m_ + b_)
        flm, frm = float(f(lm)), float(f(rm))
        left = _simpson(fa_, flm, fm_, m_ - a_)
        right = _simpson(fm_, frm, fb_, b_ - m_)
        delta = left + right - s
        # below a few ulps of the panel value the error estimate is pure round-off
        floor = ROUNDOFF_ULPS * np.finfo(float).eps * (abs(left) + abs(right))
        if depth >= max_depth or (depth >= min_depth and abs(delta) <= max(15.0 * eps, floor)):
            # Kahan summation keeps 1e-10-level tolerances meaningful
            y = left + right + delta / 15.0 - compensation
            t = total + y
            compensation = (t - total) - y
            total = t
        else:
            stack.append((m_, b_, fm_, frm, fb_, right, 0.5 * eps, depth + 1))
            stack.append((a_, m_, fa_, flm, fm_, left, 0.5 * eps, depth + 1))
    return total


def integrate_piecewise(
    f: Callable[[float], float],
    breakpoints: Iterable[float],
    tol: float = DEFAULT_TOL,
) -> float:
    """Sum of adaptive Simpson integrals between consecutive breakpoints.

    Duplicate breakpoints are dropped; the tolerance is split evenly across
    the resulting pieces.
    """
    pts = np.unique(np.asarray(list(breakpoints), dtype=float))
    if pts.size < 2:
        return 0.0
    pieces = [(lo, hi) for lo, hi in zip(pts[:-1], pts[1:]) if hi > lo]
    if not pieces:
        return 0.0
    eps = tol / len(pieces)
    return math.fsum(adaptive_simpson(f, float(lo), float(hi), eps) for lo, hi in pieces)
