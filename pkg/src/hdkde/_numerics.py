"""Small scalar solvers used by the theory modules.

Everything here is deterministic: identical inputs give bit-identical
outputs, which the phase-diagram sweeps rely on.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import BracketError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_root(func: Callable[[float], float], lo: float, hi: float,
                xtol: float = 1e-12, rtol: float = 8.9e-16, maxiter: int = 400) -> float:
    """Root of ``func`` on ``[lo, hi]`` by plain bisection."""
    flo, fhi = func(lo), func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketError("no sign change", (lo, hi))
    return optimize.bisect(func, lo, hi, xtol=xtol, rtol=rtol, maxiter=maxiter)


def scan_sign_change(func: Callable[[float], float], grid) -> tuple[float, float]:
    """First adjacent pair of grid nodes where ``func`` changes sign."""
    grid = np.asarray(grid, dtype=float)
    prev_x = grid[0]
    prev_f = func(prev_x)
    for x in grid[1:]:
        fx = func(x)
        if prev_f == 0.0:
            return prev_x, prev_x
        if np.sign(fx) != np.sign(prev_f):
            return float(prev_x), float(x)
        prev_x, prev_f = x, fx
    raise BracketError("no sign change found by scan", (float(grid[0]), float(grid[-1])))


def geometric_root(func: Callable[[float], float], center: float, decades: float = 3.0,
                   points: int = 200, xtol: float = 1e-10) -> float:
    """Root of a single-crossing function on ``[center/10**decades, center*10**decades]``.

    A geometric scan locates the sign change, bisection refines it.
    ``xtol`` is absolute in the argument.
    """
    grid = center * np.logspace(-decades, decades, points)
    lo, hi = scan_sign_change(func, grid)
    if lo == hi:
        return lo
    return bisect_root(func, lo, hi, xtol=xtol)


def expand_until(pred: Callable[[float], bool], start: float, factor: float = 2.0,
                 limit: float = 1e300) -> float:
    """Grow ``start`` geometrically until ``pred`` holds."""
    x = start
    while not pred(x):
        x *= factor
        if not math.isfinite(x) or abs(x) > limit:
            raise BracketError("bracket expansion diverged", (start, x))
    return x


def golden_max(func: Callable[[float], float], lo: float, hi: float,
               xtol: float = 1e-13, maxiter: int = 300) -> float:
    """Maximizer of a unimodal function on ``[lo, hi]`` by golden-section search."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc, fe = func(c), func(e)
    for _ in range(maxiter):
        if abs(b - a) <= xtol * (1.0 + abs(a) + abs(b)):
            break
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - _INVPHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INVPHI * (b - a)
            fe = func(e)
    return 0.5 * (a + b)
