"""Exact reference implementations used only by tests.

Everything here runs in Fraction arithmetic and by direct enumeration, with
no shared code (and no log-domain tricks) from the package under test, so
agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


def tree_outcomes(off: dict[int, Fraction], step: dict[Fraction, Fraction],
                  depth: int) -> list[tuple[Fraction, tuple]]:
    """All (probability, generation-`depth` positions) outcomes of one particle.

    Full product-space enumeration: every offspring count and every child
    displacement expands explicitly. Exponential in depth; meant for n <= 2
    on three-atom steps.
    """
    if depth == 0:
        return [(Fraction(1), (Fraction(0),))]
    sub = tree_outcomes(off, step, depth - 1)
    out: list[tuple[Fraction, tuple]] = []
    for k, pk in sorted(off.items()):
        if pk == 0:
            continue
        if k == 0:
            out.append((pk, ()))
            continue
        # each child: one displacement choice x one subtree outcome
        child_space = [
            (ps * q, tuple(s + pos for pos in positions))
            for s, ps in sorted(step.items())
            for q, positions in sub
        ]
        for combo in itertools.product(child_space, repeat=k):
            prob = pk
            positions: tuple = ()
            for q, pos in combo:
                prob *= q
                positions += pos
            out.append((prob, positions))
    return out


def brute_max_cdf(off, step, n: int, x) -> Fraction:
    """P(M_n <= x): extinct outcomes count as max = -infinity."""
    x = Fraction(x)
    total = Fraction(0)
    for prob, positions in tree_outcomes(off, step, n):
        if all(p <= x for p in positions):
            total += prob
    return total


def brute_conditioned_cdf(off, step, n: int, x, q) -> Fraction:
    """P(M_n <= x | survival) = E[1{M_n <= x} (1 - q^{Z_n})] / (1 - q).

    Uses the exact extinction probability q of the offspring law: a tree
    alive at generation n survives forever iff at least one of its Z_n
    lineages does, which is where the 1 - q^{Z_n} weight comes from.
    """
    x = Fraction(x)
    q = Fraction(q)
    total = Fraction(0)
    for prob, positions in tree_outcomes(off, step, n):
        if positions and all(p <= x for p in positions):
            total += prob * (1 - q ** len(positions))
    return total / (1 - q)


# ---------------------------------------------------------------------------
# exact lattice recursions (independent reimplementation, Fractions end to end)


def _pgf(off, s: Fraction) -> Fraction:
    return sum(p * s**k for k, p in off.items())


def extinction_seq(off, n: int) -> list[Fraction]:
    es = [Fraction(0)]
    for _ in range(n):
        es.append(_pgf(off, es[-1]))
    return es


def fraction_max_cdf(off: dict[int, Fraction], step: dict[int, Fraction],
                     n: int) -> dict[int, Fraction]:
    """Exact F_n on integer offsets over the reachable range [n*min, n*max].

    Offsets below the range carry P(Z_n = 0); above it the cdf is 1.
    """
    offs = sorted(step)
    es = extinction_seq(off, n)
    lo = hi = 0
    cur = {0: Fraction(1)}  # F_0: 1 at >= 0, 0 below

    def read(table, tlo, thi, j, below):
        if j < tlo:
            return below
        if j > thi:
            return Fraction(1)
        return table[j]

    for k in range(1, n + 1):
        nlo, nhi = lo + offs[0], hi + offs[-1]
        nxt = {}
        for j in range(nlo, nhi + 1):
            avg = sum(step[o] * read(cur, lo, hi, j - o, es[k - 1]) for o in offs)
            nxt[j] = _pgf(off, avg)
        cur, lo, hi = nxt, nlo, nhi
    return cur


def fraction_conditioned_cdf(off, step, n: int) -> dict[int, Fraction]:
    """Exact P(M_n <= x | survival) on the reachable integer offsets.

    Carries the extinction-restricted cdf E[1{M_k <= x} q^{Z_k}] through the
    same recursion (base q instead of 1) and divides the defect by 1 - q.
    """
    offs = sorted(step)
    es = extinction_seq(off, n)
    # exact extinction probability: smallest fixed point of the pgf
    q = _fixed_point(off)
    lo = hi = 0
    plain = {0: Fraction(1)}
    ext = {0: q}

    def read(table, tlo, thi, j, below, above):
        if j < tlo:
            return below
        if j > thi:
            return above
        return table[j]

    for k in range(1, n + 1):
        nlo, nhi = lo + offs[0], hi + offs[-1]
        np_, ne = {}, {}
        for j in range(nlo, nhi + 1):
            u = sum(step[o] * read(plain, lo, hi, j - o, es[k - 1], Fraction(1))
                    for o in offs)
            v = sum(step[o] * read(ext, lo, hi, j - o, es[k - 1], q) for o in offs)
            np_[j] = _pgf(off, u)
            ne[j] = _pgf(off, v)
        plain, ext, lo, hi = np_, ne, nlo, nhi
    return {j: (plain[j] - ext[j]) / (1 - q) for j in plain}


def _fixed_point(off) -> Fraction:
    """Exact extinction probability for laws whose pgf is quadratic."""
    p0 = off.get(0, Fraction(0))
    p1 = off.get(1, Fraction(0))
    p2 = off.get(2, Fraction(0))
    if set(k for k, p in off.items() if p > 0) - {0, 1, 2}:
        raise ValueError("exact fixed point implemented for support in {0,1,2}")
    if p2 == 0:
        return Fraction(0) if p1 < 1 else Fraction(1)
    # p2 q^2 + (p1 - 1) q + p0 = 0; the root below 1 is p0 / p2 when it is
    disc = (p1 - 1) ** 2 - 4 * p2 * p0
    root = _sqrt_fraction(disc)
    q = ((1 - p1) - root) / (2 * p2)
    return q


def _sqrt_fraction(x: Fraction) -> Fraction:
    import math

    num = math.isqrt(x.numerator)
    den = math.isqrt(x.denominator)
    if num * num != x.numerator or den * den != x.denominator:
        raise ValueError(f"{x} has an irrational square root")
    return Fraction(num, den)


def fraction_gw_pmf(off: dict[int, Fraction], n: int, trunc: int) -> list[Fraction]:
    """P(Z_n = k) for k <= trunc by exact truncated polynomial composition."""
    coeffs = [Fraction(0)] * (trunc + 1)
    if trunc >= 1:
        coeffs[1] = Fraction(1)
    else:
        coeffs[0] = Fraction(0)
    base = [off.get(k, Fraction(0)) for k in range(max(off) + 1)]
    for _ in range(n):
        # evaluate base(poly) truncated at degree trunc, Horner style
        acc = [Fraction(0)] * (trunc + 1)
        for c in reversed(base):
            acc = _poly_mul_trunc(acc, coeffs, trunc)
            acc[0] += c
        coeffs = acc
    return coeffs


def _poly_mul_trunc(a, b, trunc):
    out = [Fraction(0)] * (trunc + 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if i + j > trunc:
                break
            out[i + j] += ai * bj
    return out
