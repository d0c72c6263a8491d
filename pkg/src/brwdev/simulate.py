"""Seeded Monte Carlo for the running maximum and the derivative martingale,
plus analytic lower bounds built from forced-prefix strategies.

Simulation layer:

* ``simulate_forward`` grows each replica tree exactly, generation by
  generation, with no pruning; a population cap aborts the run loudly
  instead of biasing it.
* ``d_tail_slope`` estimates the tail exponent of the derivative
  martingale by population dynamics: a pool of (W, D) pairs is pushed
  through the distributional recursion, then the upper tail is fit by
  least squares in log-log coordinates.

Strategy layer:

* Schedules describe a forced prefix: keep the tree b-regular for t
  generations while displacing every child of generation k by at least
  a_k to the left.  The probability of the forced event factors into an
  explicit log-cost plus a continuation term, which is where the lower
  bounds come from.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapExceeded,
    DegenerateBoundary,
    InsufficientTail,
    OutOfRange,
    RequiresBoettcher,
)
from .model import Model
from . import oracle as _oracle
from . import rates as _rates

DEFAULT_CAP = 10**7

# replica lane reserved for the pool resampler; forward replicas are
# numbered from 0 so the two can never share a stream
_POOL_LANE = 2**64 - 1


def replica_stream(seed: int, replica: int, generation: int) -> np.random.Generator:
    """Counter-based generator for one (seed, replica, generation) cell.

    Philox is keyed by (seed, replica) and the counter's third word is the
    generation, so every cell owns a disjoint block of 2^128 draws.  Within
    a generation the draw order is fixed: first one uniform per parent for
    the offspring count, then one uniform per child for its displacement.
    Serial and parallel executions therefore agree bit for bit.
    """
    key = np.array([seed, replica], dtype=np.uint64)
    counter = np.array([0, 0, generation, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass
class EstimateRecord:
    """One Monte Carlo or analytic estimate, ready for JSONL serialization."""

    name: str
    point_estimate: float
    standard_error: float
    replicas: int
    seed: int
    wall_time_ms: float | None
    method: str  # forward-mc | strategy-bound | tail-regression

    # scratch for callers that want the decomposition; never serialized
    detail: dict | None = field(default=None, compare=False, repr=False)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "point_estimate": self.point_estimate,
            "standard_error": self.standard_error,
            "replicas": self.replicas,
            "seed": self.seed,
            "wall_time_ms": self.wall_time_ms,
            "method": self.method,
        }


@dataclass
class ForwardResult:
    """Per-replica outputs of the exact forward simulation."""

    n: int
    seed: int
    max_position: np.ndarray  # -inf when the replica died out
    derivative: np.ndarray  # nan when theta* is infinite
    population: np.ndarray  # generation-n population, int64


def _offspring_table(off) -> tuple[np.ndarray, np.ndarray]:
    ks = np.array(sorted(off.pmf), dtype=np.int64)
    cum = np.cumsum(np.array([off.pmf[int(k)] for k in ks]))
    cum[-1] = 1.0
    return ks, cum


def simulate_forward(
    model: Model,
    n: int,
    replicas: int,
    seed: int,
    population_cap: int = DEFAULT_CAP,
) -> ForwardResult:
    """Exact forward simulation of (M_n, D_n, Z_n) per replica.

    Replica r draws only from streams keyed (seed, r, generation), so any
    subset of replicas reproduces identically.  CapExceeded aborts the whole
    call; dropping big trees silently would bias every estimate downstream.
    """
    if n < 0:
        raise OutOfRange(f"generation count must be >= 0, got {n}")
    if replicas < 1:
        raise OutOfRange(f"replicas must be >= 1, got {replicas}")
    ks, cum = _offspring_table(model.off)
    step = model.step
    theta = model.consts.theta_star
    x_star = model.consts.x_star

    M = np.empty(replicas)
    D = np.empty(replicas)
    Z = np.empty(replicas, dtype=np.int64)
    for r in range(replicas):
        pos = np.zeros(1)
        for g in range(1, n + 1):
            rng = replica_stream(seed, r, g)
            counts = ks[np.searchsorted(cum, rng.random(pos.size), side="right")]
            total = int(counts.sum())
            if total > population_cap:
                raise CapExceeded(
                    f"replica {r} reached population {total} at generation {g}, "
                    f"cap is {population_cap}",
                    replica=r,
                    generation=g,
                    population=total,
                )
            if total == 0:
                pos = np.empty(0)
                break
            pos = np.repeat(pos, counts) + step.sample(rng, total)
        Z[r] = pos.size
        if pos.size == 0:
            M[r] = -math.inf
            D[r] = 0.0  # empty sum: the martingale vanishes with the tree
        else:
            M[r] = float(np.max(pos))
            if math.isinf(theta):
                D[r] = math.nan
            else:
                z = n * x_star - pos
                D[r] = float(np.sum(theta * z * np.exp(-theta * z)))
    if math.isinf(theta):
        D[:] = math.nan
    return ForwardResult(n=n, seed=seed, max_position=M, derivative=D, population=Z)


def ks_distance(samples: np.ndarray, grid: "_oracle.LogCdfGrid") -> float:
    """Kolmogorov-Smirnov distance between samples of the maximum and an
    oracle CDF grid over the grid's lattice points."""
    span = grid.span
    xs = grid.xs
    F = np.exp(-np.asarray(grid.G))
    s = np.sort(np.asarray(samples, dtype=float))
    # half-span shift makes the lattice comparison immune to float dust
    ecdf = np.searchsorted(s, xs + 0.5 * span, side="right") / s.size
    return float(np.max(np.abs(ecdf - F)))


# ---------------------------------------------------------------------------
# forced-prefix schedules


@dataclass
class StrategySchedule:
    """Forced-prefix descriptor: depth t and per-generation displacements.

    a[k-1] is the leftward displacement demanded of every generation-k
    child, k = 1..t.  log_cost is nan until the schedule is priced against
    a concrete model by strategy_lower_bound.
    """

    t: int
    a: np.ndarray
    log_cost: float = math.nan
    checksums: dict = field(default_factory=dict)
    kind: str = "custom"

    @property
    def total_shift(self) -> float:
        return float(math.fsum(self.a.tolist()))


def constant_schedule(t: int, displacement: float) -> StrategySchedule:
    """Flat schedule: every generation displaced by the same amount."""
    if t < 1:
        raise OutOfRange(f"prefix depth must be >= 1, got {t}")
    if not displacement > 0.0:
        raise OutOfRange(f"displacement must be positive, got {displacement!r}")
    a = np.full(t, float(displacement))
    return StrategySchedule(t=t, a=a, checksums={"sum_a": t * float(displacement)}, kind="constant")


def _safe_ceil(v: float) -> int:
    # guards against 3.0000000000000004-style float dust flipping the ceiling
    return int(math.ceil(v - 1e-9))


def weibull_schedule(alpha: float, b: float, ell: float) -> StrategySchedule:
    """Geometric displacement ladder tuned to stretched-exponential tails.

    t = ceil((alpha-1) log(ell) / log b) and a_k = (b_a - 1) ell / b_a^k
    with b_a = b^{1/(alpha-1)}.  Two closed-form checksums are exposed:
    sum_k a_k = (1 - b_a^{-t}) ell and the weighted energy
    sum_k a_k^alpha b^k = ell^alpha (b_a - 1)^{alpha-1} (1 - b_a^{-t}).
    """
    if not alpha > 1.0:
        raise OutOfRange(f"weibull schedule needs alpha > 1, got {alpha!r}")
    if not b > 1.0:
        raise OutOfRange(f"branching number must exceed 1, got {b!r}")
    if not ell > 0.0:
        raise OutOfRange(f"depth ell must be positive, got {ell!r}")
    b_a = b ** (1.0 / (alpha - 1.0))
    t = max(1, _safe_ceil((alpha - 1.0) * math.log(ell) / math.log(b)))
    k = np.arange(1, t + 1, dtype=float)
    a = (b_a - 1.0) * ell / b_a**k
    geom = 1.0 - b_a ** (-t)
    checksums = {
        "sum_a": float(math.fsum(a.tolist())),
        "sum_a_closed": geom * ell,
        "energy": float(math.fsum((a**alpha * b**k).tolist())),
        "energy_closed": ell**alpha * (b_a - 1.0) ** (alpha - 1.0) * geom,
    }
    return StrategySchedule(t=t, a=a, checksums=checksums, kind="weibull")


def gumbel_schedule(alpha: float, b: float, ell: float) -> StrategySchedule:
    """Slowly decaying ladder tuned to doubly exponential tails.

    t = ceil(t_coef * ell^{alpha/(alpha+1)}) with
    t_coef = ((1+alpha)/alpha)^{alpha/(alpha+1)} (log b)^{-1/(alpha+1)}
    and a_k = (log b)^{1/alpha} (t+1-k)^{1/alpha}.  The ladder telescopes:
    e^{a_k^alpha} b^k = b^{t+1} for every k, so the energy checksum is
    t * b^{t+1}; it is tracked in log domain to stay overflow-proof.
    """
    if not alpha > 0.0:
        raise OutOfRange(f"gumbel schedule needs alpha > 0, got {alpha!r}")
    if not b > 1.0:
        raise OutOfRange(f"branching number must exceed 1, got {b!r}")
    if not ell > 0.0:
        raise OutOfRange(f"depth ell must be positive, got {ell!r}")
    log_b = math.log(b)
    frac = alpha / (alpha + 1.0)
    t_coef = ((1.0 + alpha) / alpha) ** frac * log_b ** (-1.0 / (alpha + 1.0))
    t = max(1, _safe_ceil(t_coef * ell**frac))
    k = np.arange(1, t + 1, dtype=float)
    a = log_b ** (1.0 / alpha) * (t + 1.0 - k) ** (1.0 / alpha)
    terms = a**alpha + k * log_b
    mx = float(np.max(terms))
    log_energy = mx + math.log(float(np.sum(np.exp(terms - mx))))
    checksums = {
        "log_energy": log_energy,
        "log_energy_closed": math.log(t) + (t + 1.0) * log_b,
    }
    return StrategySchedule(t=t, a=a, checksums=checksums, kind="gumbel")


@dataclass(frozen=True)
class LinearTarget:
    """Target M_n <= x * n."""

    x: float

    def position(self, model: Model, n: int) -> float:
        return self.x * n

    def label(self) -> str:
        return f"x={self.x:g}"


@dataclass(frozen=True)
class ModerateTarget:
    """Target M_n <= m_n - ell, a depth-ell dip below the typical maximum."""

    ell: float

    def position(self, model: Model, n: int) -> float:
        return _rates.m_n(model, n) - self.ell

    def label(self) -> str:
        return f"ell={self.ell:g}"


def oracle_tail(model: Model):
    """Continuation estimator backed by the log-domain CDF oracle.

    Returns a callable (generations, target) -> (log P(M <= target), 0.0)
    with one cached grid per generation count.  For lattice models this is
    exact; pass a discretized twin to approximate a parametric step.
    """
    cache: dict[int, _oracle.LogCdfGrid] = {}

    def tail(gens: int, target: float) -> tuple[float, float]:
        if gens not in cache:
            cache[gens] = _oracle.max_cdf_recursion(model, gens, keep_direct=False)
        return -cache[gens].G_at(target), 0.0

    return tail


def strategy_lower_bound(
    model: Model,
    n: int,
    target,
    schedule: StrategySchedule,
    tail="oracle",
    *,
    replicas: int = 10**4,
    seed: int = 0,
    population_cap: int = DEFAULT_CAP,
) -> EstimateRecord:
    """Log-domain lower bound on P(M_n <= target position).

    Forces a b-regular prefix of depth t whose generation-k children all
    move left by at least a_k, then lets the b^t subtrees finish freely:

        log bound = (sum_{k<t} b^k) log p_b
                  + sum_{k<=t} b^k log P(X <= -a_k)
                  + b^t log P(M_{n-t} <= target + sum_k a_k).

    The continuation factor comes from `tail`: "oracle" (exact for lattice
    steps), "mc" (forward simulation, standard error propagated), or any
    callable (generations, position) -> (log_prob, se).  The schedule's
    log_cost field is filled in as a side effect.
    """
    start = time.perf_counter()
    off = model.off
    if off.b < 2:
        raise RequiresBoettcher(
            f"forced b-regular prefixes need a minimum offspring of at least 2, "
            f"got b = {off.b}"
        )
    t = schedule.t
    if t > n:
        raise OutOfRange(f"prefix depth {t} exceeds the horizon n = {n}")
    b = off.b
    log_p_b = math.log(off.pmf[b])
    step = model.step

    log_steps = 0.0
    for k in range(1, t + 1):
        lp = step.log_cdf(-float(schedule.a[k - 1]))
        if lp == -math.inf:
            raise OutOfRange(
                f"schedule displacement a_{k} = {schedule.a[k - 1]:g} has zero "
                f"probability under the step law"
            )
        log_steps += b**k * lp
    geom = (b**t - 1) // (b - 1)
    log_cost = geom * log_p_b + log_steps
    schedule.log_cost = log_cost

    shifted = target.position(model, n) + schedule.total_shift
    used_replicas = 1
    if t == n:
        # the prefix consumes the whole horizon; the continuation is M_0 = 0
        log_tail, tail_se = (0.0 if shifted >= 0.0 else -math.inf), 0.0
        method_note = "exact"
    elif tail == "oracle":
        log_tail, tail_se = oracle_tail(model)(n - t, shifted)
        method_note = "oracle"
    elif tail == "mc":
        res = simulate_forward(model, n - t, replicas, seed, population_cap)
        hits = int(np.sum(res.max_position <= shifted))
        used_replicas = replicas
        if hits == 0:
            log_tail, tail_se = -math.inf, math.inf
        else:
            p_hat = hits / replicas
            log_tail = math.log(p_hat)
            tail_se = math.sqrt((1.0 - p_hat) / hits)  # delta method on log p
        method_note = "mc"
    else:
        log_tail, tail_se = tail(n - t, shifted)
        method_note = "callable"

    bound = log_cost + b**t * log_tail
    se = b**t * tail_se
    wall = (time.perf_counter() - start) * 1000.0
    return EstimateRecord(
        name=f"strategy-bound:{schedule.kind}:t={t}:n={n}:{target.label()}",
        point_estimate=bound,
        standard_error=se,
        replicas=used_replicas,
        seed=seed,
        wall_time_ms=wall,
        method="strategy-bound",
        detail={
            "log_cost": log_cost,
            "log_tail": log_tail,
            "shifted_target": shifted,
            "tail_source": method_note,
            "t": t,
            "sum_a": schedule.total_shift,
        },
    )


def smallball_strategy_bound(
    model: Model,
    epsilon: float,
    delta: float,
) -> EstimateRecord:
    """Log-domain lower bound on P(D < epsilon) for the limit martingale.

    The tree is forced to stay b-regular and low for t generations, which
    caps every summand of D; the bound is half the forced-prefix
    probability.  For stretched-exponential steps (tail exponent alpha > 1)
    a deep geometric ladder

        t = ceil((alpha-1) log((1+delta) log(1/epsilon)) / log b),
        a_k = (b_a - 1)(1+2 delta) log(1/epsilon) / (theta* b_a^k)

    drives the doubly-logarithmic depth; every other step law (and any
    epsilon too shallow for the ladder to cover its own target) falls back
    to the single-generation construction with per-child ceiling
    c = (1+delta) log(epsilon)/theta* + x*.
    """
    start = time.perf_counter()
    off = model.off
    if off.b < 2:
        raise RequiresBoettcher(
            f"the small-ball construction forces a b-regular prefix; "
            f"minimum offspring is {off.b}"
        )
    consts = model.consts
    if consts.degenerate or math.isinf(consts.theta_star):
        raise DegenerateBoundary("small-ball bounds need a finite tilt at the speed")
    if not epsilon > 0.0:
        raise OutOfRange(f"epsilon must be positive, got {epsilon!r}")
    if not delta > 0.0:
        raise OutOfRange(f"delta must be positive, got {delta!r}")

    b = off.b
    theta = consts.theta_star
    x_star = consts.x_star
    log_p_b = math.log(off.pmf[b])
    step = model.step
    nle = -math.log(epsilon)  # <= 0 when epsilon >= 1

    bound = None
    t_used = 1
    variant = "single-step"
    alpha = getattr(step, "alpha", None)
    if step.kind == "weibull" and alpha is not None and alpha > 1.0 and nle > 0.0 and (1.0 + delta) * nle > 1.0:
        b_a = b ** (1.0 / (alpha - 1.0))
        t = max(1, _safe_ceil((alpha - 1.0) * math.log((1.0 + delta) * nle) / math.log(b)))
        k = np.arange(1, t + 1, dtype=float)
        a = (b_a - 1.0) * (1.0 + 2.0 * delta) * nle / (theta * b_a**k)
        total = float(math.fsum(a.tolist()))
        # the ladder is only a valid certificate when the forced paths land
        # at or below the ceiling the target event actually requires
        if -total <= (1.0 + delta) * math.log(epsilon) / theta + t * x_star:
            log_steps = math.fsum(b ** int(kk) * step.log_cdf(-float(ak)) for kk, ak in zip(k, a))
            geom = (b**t - 1) // (b - 1)
            bound = math.log(0.5) + geom * log_p_b + log_steps
            t_used = t
            variant = "geometric-ladder"

    if bound is None:
        c = (1.0 + delta) * math.log(epsilon) / theta + x_star
        bound = math.log(0.5) + log_p_b + b * step.log_cdf(c)

    wall = (time.perf_counter() - start) * 1000.0
    return EstimateRecord(
        name=f"smallball:eps={epsilon:g}:delta={delta:g}",
        point_estimate=bound,
        standard_error=0.0,
        replicas=1,
        seed=0,
        wall_time_ms=wall,
        method="strategy-bound",
        detail={"t": t_used, "variant": variant},
    )


# ---------------------------------------------------------------------------
# derivative-martingale tail


def _segment_sums(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Sum consecutive runs of `values` whose lengths are `counts` (0 allowed)."""
    total = values.size
    starts = np.cumsum(counts) - counts
    if total == 0:
        return np.zeros(counts.size)
    idx = np.minimum(starts, total - 1)
    sums = np.add.reduceat(values, idx)
    return np.where(counts > 0, sums, 0.0)


def d_tail_slope(
    model: Model,
    n: int,
    replicas: int,
    seed: int,
) -> EstimateRecord:
    """Tail exponent of the derivative martingale by log-log regression.

    A pool of `replicas` (W, D) pairs is pushed through the one-step
    distributional recursion n times (population dynamics: each new pair
    resamples its children's subtrees from the previous pool, so samples
    are exchangeable but not independent).  The survival function of D is
    then fit over the decade of x directly below the largest order
    statistic's own decade, i.e. [max/100, max/10]: at finite n the top
    decade is shaped by the horizon cutoff rather than the power law, so
    the decade under it is the deepest window the proxy supports.
    """
    start = time.perf_counter()
    consts = model.consts
    if consts.degenerate or math.isinf(consts.theta_star):
        raise DegenerateBoundary("the derivative martingale needs a finite tilt")
    if replicas < 1000:
        raise OutOfRange(f"pool size must be at least 1000, got {replicas}")
    theta = consts.theta_star
    x_star = consts.x_star
    ks, cum = _offspring_table(model.off)
    step = model.step

    W = np.ones(replicas)
    D = np.zeros(replicas)
    for level in range(1, n + 1):
        rng = replica_stream(seed, _POOL_LANE, level)
        counts = ks[np.searchsorted(cum, rng.random(replicas), side="right")]
        total = int(counts.sum())
        parents = rng.integers(0, replicas, size=total)
        x = step.sample(rng, total)
        w = np.exp(theta * (x - x_star))
        w_child = w * W[parents]
        d_child = w * D[parents] + theta * (x_star - x) * w_child
        W = _segment_sums(w_child, counts)
        D = _segment_sums(d_child, counts)

    srt = np.sort(D[D > 0.0])
    if srt.size == 0:
        raise InsufficientTail("no positive martingale values to fit")
    x_hi = srt[-1] / 10.0
    x_lo = x_hi / 10.0
    thresholds = np.geomspace(x_lo, x_hi, 25)
    counts_gt = srt.size - np.searchsorted(srt, thresholds, side="right")
    if int(counts_gt[0]) < 100:
        raise InsufficientTail(
            f"only {int(counts_gt[0])} exceedances in the fit window "
            f"[{x_lo:g}, {x_hi:g}], need at least 100"
        )
    keep = counts_gt > 0
    if int(np.sum(keep)) < 3:
        raise InsufficientTail("fewer than 3 populated thresholds in the fit window")
    lx = np.log(thresholds[keep])
    cnt = counts_gt[keep].astype(float)
    ly = np.log(cnt / replicas)
    sx = lx - lx.mean()
    sxx = float(np.sum(sx * sx))
    slope = float(np.sum(sx * ly) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    # sampling error of the slope: delta method on log of binomial counts,
    # thresholds treated as independent (they share samples, so this is an
    # approximation); scales like 1/sqrt(replicas)
    var_ly = (1.0 - cnt / replicas) / cnt
    se = float(math.sqrt(np.sum((sx / sxx) ** 2 * var_ly)))

    wall = (time.perf_counter() - start) * 1000.0
    return EstimateRecord(
        name=f"d-tail-slope:n={n}",
        point_estimate=slope,
        standard_error=se,
        replicas=replicas,
        seed=seed,
        wall_time_ms=wall,
        method="tail-regression",
        detail={
            "window": (float(x_lo), float(x_hi)),
            "intercept": intercept,
            "positive_fraction": srt.size / replicas,
        },
    )
