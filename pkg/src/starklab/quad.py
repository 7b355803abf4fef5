"""Quadrature helpers: scalar line integrals along classical trajectories and
graded vector-valued rules for modifier phases on the momentum lattice."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

__all__ = ["ToleranceError", "trajectory_integral", "graded_gl", "gl_nodes"]


class ToleranceError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


def trajectory_integral(f: Callable[[float], float], a: float, b: float,
                        *, feature_scale: float = 1.0, tol: float = 1e-10,
                        breakpoints: Sequence[float] = ()) -> float:
    """Integral of a scalar function along (possibly infinite) time limits.

    `breakpoints` mark where the integrand structure lives (entry/exit of
    the interaction zone); without them an adaptive rule on a wide interval
    can overlook a narrow passage entirely.  Infinite tails start beyond
    the outermost breakpoint and use scipy's transformed rules.
    """
    pts = sorted(set(float(p) for p in breakpoints))
    S = max([8.0 * feature_scale, 1.0] + [abs(p) * 1.25 for p in pts])
    total = 0.0
    err = 0.0
    segments = []
    lo, hi = a, b
    if lo == -math.inf:
        segments.append((-math.inf, -S))
        lo = -S
    if hi == math.inf:
        segments.append((S, math.inf))
        hi = S
    if lo < hi:
        inner = [p for p in pts if lo < p < hi]
        for s0, s1 in zip([lo] + inner, inner + [hi]):
            segments.append((s0, s1))
    for (s0, s1) in segments:
        val, e = quad(f, s0, s1, epsabs=tol / max(len(segments), 4),
                      epsrel=0.0, limit=400)
        total += val
        err += abs(e)
    if err > 50 * tol:
        raise ToleranceError(
            f"trajectory integral error estimate {err:.2e} exceeds tolerance {tol:.2e}")
    return total


_GL_CACHE: dict = {}


def gl_nodes(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def graded_gl(f: Callable[[np.ndarray], np.ndarray], t: float, *,
              smallest_scale: float, n_seg: int = 24, order: int = 12,
              tol: float = 1e-10, max_refine: int = 3) -> np.ndarray:
    """integral_0^t f(s) ds for array-valued f, graded toward s = 0.

    Breakpoints grow geometrically from `smallest_scale` to |t| so that the
    early segments resolve the fastest integrand variation.  Convergence is
    verified by doubling the segment count until the max-norm change is
    below tol; raises ToleranceError if refinement stalls.
    """
    if t == 0.0:
        return f(np.array([0.0]))[..., 0] * 0.0
    sign = 1.0 if t > 0 else -1.0
    T = abs(t)
    s0 = min(max(smallest_scale, T * 1e-6), T / 4)

    def breakpoints(n):
        k = np.arange(n + 1)
        return np.concatenate([[0.0], s0 * (T / s0) ** (k[1:] / n)])

    def integrate(n):
        bp = breakpoints(n) * sign
        x, w = gl_nodes(order)
        acc = None
        for i in range(len(bp) - 1):
            mid = 0.5 * (bp[i] + bp[i + 1])
            half = 0.5 * (bp[i + 1] - bp[i])
            nodes = mid + half * x
            vals = f(nodes)                       # shape (..., order)
            seg = (vals * w).sum(axis=-1) * half
            acc = seg if acc is None else acc + seg
        return acc

    prev = integrate(n_seg)
    diff = None
    for _ in range(max_refine):
        n_seg *= 2
        cur = integrate(n_seg)
        diff = np.abs(cur - prev)
        if np.max(diff) <= tol:
            return cur
        prev = cur
    worst = float(np.max(diff))
    idx = np.unravel_index(int(np.argmax(diff)), np.shape(diff))
    raise ToleranceError(
        f"lattice phase quadrature stalled at {worst:.2e} (> {tol:.2e}) at index {idx}")
