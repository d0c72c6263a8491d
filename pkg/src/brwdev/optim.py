"""One-dimensional searches used by the rate-function layer.

Nothing here knows about branching walks: plain bisection, a bracketed Newton
for monotone targets, and a coarse-grid scan followed by golden-section
refinement for sup/inf of continuous objectives on an interval.
"""

from __future__ import annotations

import math

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def bisect_root(g, lo: float, hi: float, xtol: float = 1e-14,
                rtol: float = 0.0, max_iter: int = 300) -> float:
    """Root of g on [lo, hi]; g(lo) and g(hi) must differ in sign.

    Stops when the bracket is narrower than xtol (absolute) or when the
    residual |g(mid)| drops to rtol or below.
    """
    glo = g(lo)
    ghi = g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo > 0.0) == (ghi > 0.0):
        raise ValueError(f"root not bracketed on [{lo}, {hi}]")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0 or abs(gm) <= rtol or (hi - lo) <= xtol:
            return mid
        if (gm > 0.0) == (ghi > 0.0):
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    return mid


def newton_bracketed(g, dg, lo: float, hi: float, xtol: float = 1e-13,
                     max_iter: int = 200) -> float:
    """Root of an increasing g on [lo, hi]: Newton steps clipped to a shrinking
    bracket, bisection whenever a step leaves it or the derivative misbehaves."""
    glo = g(lo)
    ghi = g(hi)
    if glo > 0.0 or ghi < 0.0:
        raise ValueError(f"increasing root not bracketed on [{lo}, {hi}]")
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gx = g(x)
        if gx == 0.0:
            return x
        if gx < 0.0:
            lo = x
        else:
            hi = x
        d = dg(x)
        ok = math.isfinite(d) and d > 0.0
        if ok:
            xn = x - gx / d
            ok = lo < xn < hi
        if not ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= xtol * (1.0 + abs(x)):
            return xn
        x = xn
    return x


def golden_max(f, lo: float, hi: float, xtol: float = 1e-10,
               max_iter: int = 400) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; returns (argmax, value)."""
    a, b = lo, hi
    c = a + _INVPHI2 * (b - a)
    d = a + _INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    it = 0
    while (b - a) > xtol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = a + _INVPHI2 * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    return x, f(x)


def grid_then_golden_max(f, lo: float, hi: float, npoints: int = 1024,
                         xtol: float = 1e-10) -> tuple[float, float]:
    """Coarse scan to locate the global maximum, golden-section to refine it.

    The scan guards against multiple local maxima at grid resolution; the
    refinement only assumes unimodality between the two grid neighbours of the
    scan winner. Returns (argmax, value); keeps the scan winner if refinement
    somehow lands lower (flat objective, noise at the tolerance floor).
    """
    if hi < lo:
        raise ValueError("empty interval")
    if hi == lo:
        return lo, f(lo)
    n = max(int(npoints), 3)
    xs = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    vals = [f(x) for x in xs]
    i = max(range(n), key=lambda j: vals[j])
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n - 1)]
    x, v = golden_max(f, a, b, xtol=xtol)
    if vals[i] > v:
        return xs[i], vals[i]
    return x, v


def grid_then_golden_min(f, lo: float, hi: float, npoints: int = 1024,
                         xtol: float = 1e-10) -> tuple[float, float]:
    x, v = grid_then_golden_max(lambda t: -f(t), lo, hi, npoints=npoints, xtol=xtol)
    return x, -v
