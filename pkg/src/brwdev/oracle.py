"""Exact log-domain recursions for the law of the running maximum.

The maximum of a branching random walk at generation n has cdf
``F_n(x) = f(E[F_{n-1}(x - X)])`` with ``F_0 = 1_{x >= 0}``; probabilities of
interest get as small as ``exp(-b^n)``, far below float underflow, so the
recursion is carried in ``G = -log F`` throughout. Three parallel recursions
share one sweep:

* the plain grid ``G_n``,
* a direct probability-domain twin ``F_n`` kept for cross-checking wherever
  its values are representable,
* for Schroeder laws, the survival-conditioned law via the defect
  ``Delta_n(x) = P(M_n <= x, survival)``. ``Delta`` is itself carried in log
  form using the factorization ``f(u) - f(v) = (u - v) g(u, v)`` with
  ``g(u, v) = sum_k p_k sum_{j<k} u^j v^{k-1-j}``: every term is positive, so
  the defect never passes through a catastrophic subtraction even when it is
  seventy orders of magnitude below the two cdfs it separates.

Extinct replicas have no generation-n particles at all; their maximum is
``-inf`` by convention and counts as ``<= x`` for every x. Below the support
floor ``-nL`` the cdf therefore equals ``P(Z_n = 0)``, which seeds the
out-of-grid fill values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import (
    DegenerateBoundary,
    FormulaMismatch,
    GridOverflow,
    NotSchroeder,
    OutOfRange,
    ValidationError,
)
from .model import (
    GumbelTail,
    LatticePMF,
    Model,
    OffspringLaw,
    StepLaw,
    WeibullTail,
    floor_to_lattice,
)
from .serial import fmt17

__all__ = [
    "LogCdfGrid",
    "PgfSeries",
    "WalkPmf",
    "DiscretizedStep",
    "max_cdf_recursion",
    "conditioned_cdf",
    "discretize_step",
    "gw_pmf",
    "walk_pmf",
    "derivative_martingale_mean",
    "log_cdf_csv_lines",
]

_PAD = 2  # grid margin beyond the reachable support, in lattice offsets
_DIRECT_CUTOFF = 30.0  # switch composition to series form above this y
_REPRESENTABLE_G = 700.0  # direct-domain column is meaningful up to here


@dataclass
class LogCdfGrid:
    """G = -log P(M_n <= x) on the lattice x = offset * span, offsets lo..hi.

    ``below_G`` is the constant value for offsets under ``lo`` (the cdf equals
    P(Z_n = 0) there; +inf when extinction is impossible); above ``hi`` the
    cdf is 1 and G is 0. ``F_direct`` is the probability-domain twin, NaN
    wherever it underflowed. For Schroeder models ``conditioned_G`` holds
    -log P(M_n <= x | survival) and ``ext_G`` holds -log P(M_n <= x, die out).
    """

    n: int
    span: float
    lo: int
    hi: int
    G: np.ndarray
    F_direct: np.ndarray
    below_G: float
    conditioned_G: np.ndarray | None = None
    ext_G: np.ndarray | None = None
    constants: dict | None = None

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    @property
    def xs(self) -> np.ndarray:
        return self.offsets * self.span

    def G_at(self, x: float) -> float:
        j = floor_to_lattice(x, self.span)
        if j < self.lo:
            return self.below_G
        if j > self.hi:
            return 0.0
        return float(self.G[j - self.lo])

    def conditioned_G_at(self, x: float) -> float:
        if self.conditioned_G is None:
            raise ValidationError("grid carries no survival-conditioned values")
        j = floor_to_lattice(x, self.span)
        if j < self.lo:
            return math.inf  # survivors always have particles above the floor
        if j > self.hi:
            return 0.0
        return float(self.conditioned_G[j - self.lo])


@dataclass
class PgfSeries:
    """Leading power-series coefficients of the n-fold pgf iterate.

    ``coefficients[k] = P(Z_n = k)`` for k = 0..trunc, exact modulo the
    truncation: composing polynomials keeps every retained coefficient equal
    to the untruncated one because low powers never receive contributions
    from discarded high powers.
    """

    n: int
    trunc: int
    coefficients: np.ndarray
    tail_mass: float

    def as_dict(self) -> dict:
        return {"n": self.n, "trunc": self.trunc,
                "coefficients": [float(c) for c in self.coefficients],
                "tail_mass": self.tail_mass}


@dataclass
class WalkPmf:
    """Exact n-step walk pmf on the step lattice: offsets lo..lo+len-1."""

    span: float
    lo: int
    probs: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + len(self.probs), dtype=np.int64)

    @property
    def positions(self) -> np.ndarray:
        return self.offsets * self.span


@dataclass
class DiscretizedStep:
    """A lattice twin of a parametric step law plus discretization diagnostics."""

    step: LatticePMF
    lost_tail_mass: float
    mean_correction: float


# ---------------------------------------------------------------------------
# core recursion machinery


def _logsumexp_cols(a: np.ndarray) -> np.ndarray:
    """logsumexp down axis 0, exact about -inf columns (no NaN leakage)."""
    m = np.max(a, axis=0)
    out = np.full(a.shape[1], -np.inf)
    ok = np.isfinite(m)
    if np.any(ok):
        with np.errstate(divide="ignore"):
            out[ok] = m[ok] + np.log(np.sum(np.exp(a[:, ok] - m[ok]), axis=0))
    return out


def _read_shifted(arr: np.ndarray, lo: int, off_j: int, want_lo: int, want_hi: int,
                  below: float, above: float) -> np.ndarray:
    """Values of a grid array at offsets (want_lo..want_hi) - off_j."""
    wanted = np.arange(want_lo, want_hi + 1, dtype=np.int64) - off_j
    pos = wanted - lo
    out = np.empty(want_hi - want_lo + 1)
    inside = (pos >= 0) & (pos < len(arr))
    out[inside] = arr[pos[inside]]
    out[wanted < lo] = below
    out[wanted > lo + len(arr) - 1] = above
    return out


def _compose_log(off: OffspringLaw, y: np.ndarray) -> np.ndarray:
    """G = -log f(e^{-y}) elementwise, stable for arbitrarily large y.

    For y beyond the cutoff the pgf is expanded around its smallest-degree
    term: with p0 > 0, f(s) = p0 (1 + sum_{k>=1} (p_k/p0) s^k); with p0 = 0
    and minimum degree b, f(s) = p_b s^b (1 + sum_{k>b} (p_k/p_b) s^{k-b}).
    """
    y = np.maximum(y, 0.0)
    out = np.empty_like(y)
    small = y <= _DIRECT_CUTOFF
    if np.any(small):
        with np.errstate(divide="ignore"):
            out[small] = -np.log(off.pgf(np.exp(-y[small])))
    big = ~small
    if np.any(big):
        yb = y[big]
        p0 = off.pmf.get(0, 0.0)
        acc = np.zeros_like(yb)
        with np.errstate(invalid="ignore"):
            if p0 > 0.0:
                for k, p in off.pmf.items():
                    if k >= 1:
                        acc += (p / p0) * np.exp(-k * yb)
                out[big] = -math.log(p0) - np.log1p(acc)
            else:
                b = off.b
                pb = off.pmf[b]
                for k, p in off.pmf.items():
                    if k > b:
                        acc += (p / pb) * np.exp(-(k - b) * yb)
                val = b * yb - np.log1p(acc)
                val[np.isinf(yb)] = np.inf  # b * inf, dodge any 0*inf pairing
                out[big] = -math.log(pb) + val
    return out


def _require_lattice(step: StepLaw) -> LatticePMF:
    if not isinstance(step, LatticePMF):
        raise ValidationError(
            "the recursion runs on lattice steps; discretize parametric laws first")
    return step


def _grid_plan(step: LatticePMF, n: int, memory_budget: int, arrays: int) -> list[tuple[int, int]]:
    o_min = int(step.offsets[0])
    o_max = int(step.offsets[-1])
    plan = [(k * o_min - _PAD, k * o_max + _PAD) for k in range(n + 1)]
    total = sum(hi - lo + 1 for lo, hi in plan)
    if total * 8 * arrays > memory_budget:
        raise GridOverflow(
            f"recursion needs about {total * 8 * arrays} bytes for n = {n}, "
            f"over the {memory_budget} byte budget")
    return plan


def _extinction_sequence(off: OffspringLaw, n: int) -> list[float]:
    """e_k = P(Z_k = 0) = k-fold pgf iterate at 0."""
    es = [0.0]
    for _ in range(n):
        es.append(float(off.pgf(es[-1])))
    return es


def _neg_log(p: float) -> float:
    """-log p with the p = 0 case mapped to +inf instead of a domain error."""
    return -math.log(p) if p > 0.0 else math.inf


def _pinned_step_weights(step: LatticePMF) -> tuple[np.ndarray, np.ndarray]:
    """Step weights with their log-domain sum pinned to exactly zero.

    Hand-built dyadic laws sum to 1.0 on the nose, but a discretized twin
    with dozens of atoms can land one ulp off. The recursion composes a pgf
    of degree >= 2 every generation, so a coherent one-ulp error in the flat
    right region of the grid doubles per generation and overruns everything
    near generation 55. Pinning the exact logsumexp the sweep evaluates
    removes the systematic term; laws already summing to zero in log space
    come back untouched. The probability-domain twin additionally needs the
    s <= 1 clip at its call sites, since its dot product rounds on its own.
    """
    logp = step.log_probs
    lse = float(_logsumexp_cols(logp[:, None])[0])
    if lse == 0.0:
        return logp, step.probs
    for _ in range(8):
        logp = logp - lse
        lse = float(_logsumexp_cols(logp[:, None])[0])
        if lse == 0.0:
            break
    for _ in range(64):
        if lse >= 0.0:  # tiny surplus is harmless: y = -lse clamps at zero
            break
        j = int(np.argmax(logp))
        logp = logp.copy()
        logp[j] = np.nextafter(logp[j], 0.0)
        lse = float(_logsumexp_cols(logp[:, None])[0])
    return logp, np.exp(logp)


def max_cdf_recursion(model: Model, n: int, *, memory_budget: int = 2 << 30,
                      keep_direct: bool = True) -> LogCdfGrid:
    """Exact G_n = -log P(M_n <= x) on the reachable lattice.

    One generation reads the previous grid at every step shift, combines the
    shifts by log-sum-exp under the step weights, and composes with the
    offspring pgf in log form. Values left of the grid floor equal
    -log P(Z_{n-1} = 0); right of the grid the cdf is already 1.
    """
    n = int(n)
    if n < 1:
        raise OutOfRange(f"generation count must be >= 1, got {n}")
    step = _require_lattice(model.step)
    off = model.off
    plan = _grid_plan(step, n, memory_budget, arrays=3 if keep_direct else 2)
    es = _extinction_sequence(off, n)

    offs = [int(j) for j in step.offsets]
    logp, probs = _pinned_step_weights(step)

    lo, hi = plan[0]
    G = np.full(hi - lo + 1, np.inf)
    G[-lo:] = 0.0  # offsets >= 0
    Fd = np.zeros(hi - lo + 1)
    Fd[-lo:] = 1.0

    for k in range(1, n + 1):
        below_G = _neg_log(es[k - 1])
        lo_k, hi_k = plan[k]
        size = hi_k - lo_k + 1
        stack = np.empty((len(offs), size))
        for i, oj in enumerate(offs):
            stack[i] = logp[i] - _read_shifted(G, lo, oj, lo_k, hi_k, below_G, 0.0)
        y = -_logsumexp_cols(stack)
        G_new = _compose_log(off, y)
        if keep_direct:
            s = np.zeros(size)
            for i, oj in enumerate(offs):
                s += probs[i] * _read_shifted(Fd, lo, oj, lo_k, hi_k, es[k - 1], 1.0)
            Fd = off.pgf(np.minimum(s, 1.0))
        G, lo, hi = G_new, lo_k, hi_k

    below_final = _neg_log(es[n])
    F_direct = Fd if keep_direct else np.full_like(G, np.nan)
    return LogCdfGrid(n=n, span=step.span, lo=lo, hi=hi, G=G,
                      F_direct=F_direct, below_G=below_final,
                      constants=model.consts.as_dict())


def conditioned_cdf(model: Model, n: int, *, memory_budget: int = 2 << 30,
                    keep_direct: bool = True) -> LogCdfGrid:
    """The recursion with the survival-conditioned law carried alongside.

    Tracks log Delta_k with Delta_k(x) = P(M_k <= x, survival) via
    Delta_k = E[Delta_{k-1}(x - X)] * g(u, v), where u and v are the
    step-averaged plain and extinction-restricted cdfs of generation k-1 and
    g is the positive polynomial with f(u) - f(v) = (u - v) g(u, v). The
    returned grid's ``conditioned_G`` is -log(Delta_n / (1 - q)) and
    ``ext_G`` is -log P(M_n <= x, die out).
    """
    n = int(n)
    if n < 1:
        raise OutOfRange(f"generation count must be >= 1, got {n}")
    step = _require_lattice(model.step)
    off = model.off
    p01 = off.pmf.get(0, 0.0) + off.pmf.get(1, 0.0)
    if p01 <= 0.0 or p01 >= 1.0:
        raise NotSchroeder(
            f"survival conditioning needs 0 < p0 + p1 < 1, got {p01!r}")
    q = model.consts.q
    plan = _grid_plan(step, n, memory_budget, arrays=5)
    es = _extinction_sequence(off, n)

    offs = [int(j) for j in step.offsets]
    logp, probs = _pinned_step_weights(step)
    pmf_items = sorted(off.pmf.items())
    max_k = off.max_k

    lo, hi = plan[0]
    size0 = hi - lo + 1
    G = np.full(size0, np.inf)
    G[-lo:] = 0.0
    Gx = np.full(size0, np.inf)  # -log F^ext, seeded with q below
    if q > 0.0:
        Gx[-lo:] = -math.log(q)
    logD = np.full(size0, -np.inf)
    logD[-lo:] = math.log1p(-q)
    Fd = np.zeros(size0)
    Fd[-lo:] = 1.0

    for k in range(1, n + 1):
        below_G = _neg_log(es[k - 1])
        lo_k, hi_k = plan[k]
        size = hi_k - lo_k + 1
        stack = np.empty((len(offs), size))
        for i, oj in enumerate(offs):
            stack[i] = logp[i] - _read_shifted(G, lo, oj, lo_k, hi_k, below_G, 0.0)
        y = np.maximum(-_logsumexp_cols(stack), 0.0)
        for i, oj in enumerate(offs):
            stack[i] = logp[i] - _read_shifted(Gx, lo, oj, lo_k, hi_k, below_G,
                                               math.inf if q == 0.0 else -math.log(q))
        y_ext = np.maximum(-_logsumexp_cols(stack), 0.0)
        for i, oj in enumerate(offs):
            stack[i] = logp[i] + _read_shifted(logD, lo, oj, lo_k, hi_k,
                                               -math.inf, math.log1p(-q))
        log_delta = _logsumexp_cols(stack)

        u = np.exp(-y)
        v = np.exp(-y_ext)
        # g(u, v) = sum_k p_k sum_{j<k} u^j v^{k-1-j}; all terms nonnegative
        u_pows = [np.ones(size)]
        v_pows = [np.ones(size)]
        for _ in range(max_k - 1):
            u_pows.append(u_pows[-1] * u)
            v_pows.append(v_pows[-1] * v)
        gpoly = np.zeros(size)
        for ck, cp in pmf_items:
            for j in range(ck):
                gpoly += cp * (u_pows[j] * v_pows[ck - 1 - j])
        with np.errstate(divide="ignore"):
            logD_new = log_delta + np.log(gpoly)

        G_new = _compose_log(off, y)
        Gx_new = _compose_log(off, y_ext)
        if keep_direct:
            s = np.zeros(size)
            for i, oj in enumerate(offs):
                s += probs[i] * _read_shifted(Fd, lo, oj, lo_k, hi_k, es[k - 1], 1.0)
            Fd = off.pgf(np.minimum(s, 1.0))
        G, Gx, logD, lo, hi = G_new, Gx_new, logD_new, lo_k, hi_k

    cond_G = math.log1p(-q) - logD
    below_final = _neg_log(es[n])
    F_direct = Fd if keep_direct else np.full_like(G, np.nan)
    return LogCdfGrid(n=n, span=step.span, lo=lo, hi=hi, G=G,
                      F_direct=F_direct, below_G=below_final,
                      conditioned_G=cond_G, ext_G=Gx,
                      constants=model.consts.as_dict())


# ---------------------------------------------------------------------------
# discretization of parametric tails


def discretize_step(step: StepLaw, h: float, p_cut: float) -> DiscretizedStep:
    """Project a parametric step law onto the lattice h * Z.

    Atom j receives the mass of ((j - 1/2) h, (j + 1/2) h]; everything beyond
    the two-sided quantile at level p_cut is folded into the edge atoms, so no
    mass is dropped. Mirrored bins make the discretized mean vanish exactly
    for these symmetric families; an explicit recentering pass covers any
    future asymmetric law and reports what it moved.
    """
    if isinstance(step, LatticePMF):
        raise ValidationError("step is already a lattice law")
    if not isinstance(step, (WeibullTail, GumbelTail)):
        raise ValidationError(f"cannot discretize step kind {step.kind!r}")
    h = float(h)
    p_cut = float(p_cut)
    if not (math.isfinite(h) and h > 0.0):
        raise OutOfRange(f"lattice span must be positive, got {h!r}")
    if not (0.0 < p_cut <= 1e-6):
        raise OutOfRange(f"tail cut must lie in (0, 1e-6], got {p_cut!r}")
    z_max = step.tail_quantile(p_cut)
    J = max(1, int(math.ceil(z_max / h)))
    if J > 10**7:
        raise GridOverflow(f"{2 * J + 1} atoms at span {h!r} exceeds the atom budget")
    neg = np.empty(J + 1)  # neg[j] = mass at offset -j, j = 1..J
    for j in range(1, J):
        neg[j] = step.cdf(-(j - 0.5) * h) - step.cdf(-(j + 0.5) * h)
    neg[J] = step.cdf(-(J - 0.5) * h)
    atom0 = 1.0 - 2.0 * step.cdf(-0.5 * h)
    masses = {0: atom0}
    for j in range(1, J + 1):
        if neg[j] > 0.0:
            masses[-j] = neg[j]
            masses[j] = neg[j]  # exact mirror keeps the mean at zero bitwise
    total = math.fsum(masses.values())
    masses = {j: p / total for j, p in masses.items()}
    mean_before = h * math.fsum(j * p for j, p in sorted(masses.items()))
    masses, moved = _recenter(masses, h)
    lattice = LatticePMF(h, masses)
    lost = 2.0 * step.cdf(-(J + 0.5) * h)
    return DiscretizedStep(step=lattice, lost_tail_mass=lost,
                           mean_correction=abs(mean_before) + moved)


def _recenter(masses: dict[int, float], h: float) -> tuple[dict[int, float], float]:
    """Cancel a residual mean by shifting mass between two adjacent atoms."""
    mu = h * math.fsum(j * p for j, p in sorted(masses.items()))
    if mu == 0.0:
        return masses, 0.0
    out = dict(masses)
    shift = abs(mu) / h
    # moving eps from atom a to atom a -/+ 1 changes the mean by -/+ eps*h
    order = sorted(out, reverse=mu > 0.0)
    for a in order:
        target = a - 1 if mu > 0.0 else a + 1
        eps = min(shift, out[a])
        if eps <= 0.0:
            continue
        out[a] -= eps
        out[target] = out.get(target, 0.0) + eps
        shift -= eps
        if shift <= 0.0:
            break
    if shift > 1e-15:
        raise FormulaMismatch(f"could not recenter: residual shift {shift!r}")
    out = {j: p for j, p in out.items() if p > 0.0}
    return out, abs(mu)


# ---------------------------------------------------------------------------
# generation-size pmf and walk pmf


def gw_pmf(off: OffspringLaw, n: int, trunc: int) -> PgfSeries:
    """P(Z_n = k) for k <= trunc via truncated composition of the pgf.

    Polynomial composition is evaluated Horner-style with every product
    truncated at degree ``trunc``; discarded high powers never feed back into
    retained ones, so the kept coefficients are exact.
    """
    n = int(n)
    trunc = int(trunc)
    if n < 0:
        raise OutOfRange(f"generation count must be >= 0, got {n}")
    if trunc < 0:
        raise OutOfRange(f"truncation must be >= 0, got {trunc}")
    width = trunc + 1
    cur = np.zeros(width)
    if trunc >= 1:
        cur[1] = 1.0  # the identity series; it has no constant term
    for _ in range(n):
        nxt = np.zeros(width)
        for k in range(off.max_k, -1, -1):
            nxt = np.convolve(nxt, cur)[:width]
            nxt[0] += off.coeffs[k]
        cur = nxt
    tail = 1.0 - math.fsum(cur)
    if tail < -1e-12:
        raise FormulaMismatch(f"series coefficients sum past 1 by {-tail!r}")
    return PgfSeries(n=n, trunc=trunc, coefficients=cur, tail_mass=max(tail, 0.0))


def walk_pmf(step: StepLaw, n: int) -> WalkPmf:
    """Exact pmf of the centered n-step lattice walk by iterated convolution."""
    lat = _require_lattice(step)
    n = int(n)
    if n < 0:
        raise OutOfRange(f"step count must be >= 0, got {n}")
    o_min = int(lat.offsets[0])
    o_max = int(lat.offsets[-1])
    base = np.zeros(o_max - o_min + 1)
    for j, p in zip(lat.offsets, lat.probs):
        base[int(j) - o_min] = p
    cur = np.array([1.0])
    for _ in range(n):
        if len(cur) > 4096 or len(base) > 4096:
            cur = signal.fftconvolve(cur, base)
            low = float(np.min(cur))
            if low < -1e-15:
                raise FormulaMismatch(f"fft convolution produced mass {low!r} < -1e-15")
            cur = np.maximum(cur, 0.0)
        else:
            cur = np.convolve(cur, base)
    total = float(np.sum(cur))
    if abs(total - 1.0) > 1e-12:
        raise FormulaMismatch(f"walk pmf mass drifted to {total!r}")
    cur = cur / total
    return WalkPmf(span=lat.span, lo=n * o_min, probs=cur)


def derivative_martingale_mean(model: Model, n: int, *, return_parts: bool = False):
    """E[D_n] for D_n = sum over particles of theta (n x* - S) e^{theta (S - n x*)}.

    Computed as an exact lattice sum m^n * sum_s P(S_n = s) (...) with
    compensated summation, keeping the positive and negative parts separate so
    the cancellation that makes the mean vanish is measured, not assumed.
    """
    th = model.consts.theta_star
    if not math.isfinite(th):
        raise DegenerateBoundary("derivative martingale needs a finite tilt")
    n = int(n)
    if n < 0:
        raise OutOfRange(f"generation count must be >= 0, got {n}")
    if n == 0:
        return (0.0, 0.0) if return_parts else 0.0
    wp = walk_pmf(model.step, n)
    s = wp.positions
    xs = model.consts.x_star
    log_m = model.consts.log_m
    with np.errstate(divide="ignore"):
        log_w = n * log_m + np.log(wp.probs) + th * (s - n * xs)
    terms = th * (n * xs - s) * np.exp(log_w)
    pos = math.fsum(float(t) for t in terms if t > 0.0)
    neg = math.fsum(float(-t) for t in terms if t < 0.0)
    mean = math.fsum(float(t) for t in terms)
    if return_parts:
        return mean, pos
    return mean


# ---------------------------------------------------------------------------
# CSV serialization


def log_cdf_csv_lines(grids) -> list[str]:
    """Delimited rows for one or more grids: n, x, G, direct F, conditioned G."""
    lines = ["n,x,G,F_direct_if_representable,conditioned_G"]
    for grid in grids:
        cond = grid.conditioned_G
        for i, j in enumerate(range(grid.lo, grid.hi + 1)):
            g = float(grid.G[i])
            fd = float(grid.F_direct[i]) if grid.F_direct is not None else math.nan
            direct = fmt17(fd) if (not math.isnan(fd)) and fd > 0.0 and g <= _REPRESENTABLE_G else ""
            cg = fmt17(float(cond[i])) if cond is not None else ""
            lines.append(
                f"{grid.n},{fmt17(j * grid.span)},{fmt17(g)},{direct},{cg}")
    return lines
