"""Rate functions, speeds, tilts, and deviation/small-ball exponents.

Everything here is analytic: Legendre transforms of the step log-mgf, the
speed and tilt solving the first-order conditions, and the closed-form or
variational exponents for bounded, stretched-exponential (weibull) and doubly
exponential (gumbel) displacement tails. Monte Carlo and recursion live in
their own modules and treat this one as ground truth for constants.

Sign conventions: ``rate_I`` and ``rate_bounded`` are nonnegative decay rates
(``P ~ e^{-n I}``); the Schroeder functionals ``schroder_H`` and
``schroder_linear_rate`` are the limits of ``(1/ell) log P`` and
``(1/n) log P`` themselves, hence nonpositive; ``large_dev_rate`` is
``log m - I(x)``, the growth rate of the expected count above level ``x n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    AtomRequired,
    DegenerateBoundary,
    EmptyFeasible,
    FormulaMismatch,
    NoRoot,
    NotSchroeder,
    OutOfRange,
    RequiresBoettcher,
    ValidationError,
)
from .model import (
    GumbelTail,
    LatticePMF,
    Model,
    OffspringLaw,
    StepLaw,
    WeibullTail,
    schroder_gamma,
)
from .optim import (
    bisect_root,
    grid_then_golden_max,
    grid_then_golden_min,
    newton_bracketed,
)

__all__ = [
    "RateReport",
    "EnergyBound",
    "log_mgf",
    "rate_I",
    "speed_x_star",
    "solve_tilt",
    "theta_star",
    "m_n",
    "rate_bounded",
    "beta_moderate",
    "rate_weibull",
    "rate_gumbel",
    "smallball_weibull",
    "smallball_gumbel",
    "smallball_bounded_exponent",
    "schroder_H",
    "schroder_linear_rate",
    "large_dev_rate",
    "schroder_t_star",
    "min_energy_bound",
]


@dataclass
class RateReport:
    """A computed rate together with the optimizer evidence behind it."""

    name: str
    value: float
    params: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value,
                "params": dict(self.params), "trace": dict(self.trace)}


@dataclass
class EnergyBound:
    """Analytic energy lower bound versus the numerically minimized schedule."""

    analytic: float
    numerical: float
    schedule: tuple
    pruned_factor: float
    margin: float

    def as_dict(self) -> dict:
        return {"analytic": self.analytic, "numerical": self.numerical,
                "schedule": list(self.schedule), "pruned_factor": self.pruned_factor,
                "margin": self.margin}


# ---------------------------------------------------------------------------
# log-mgf and tilted moments


class _LatticeTilt:
    def __init__(self, step: LatticePMF):
        self.pos = step.positions.astype(float)
        self.logp = step.log_probs.copy()

    def log_psi(self, t: float) -> float:
        w = self.logp + t * self.pos
        m = float(np.max(w))
        return m + math.log(float(np.sum(np.exp(w - m))))

    def moments(self, t: float) -> tuple[float, float]:
        w = self.logp + t * self.pos
        w -= float(np.max(w))
        p = np.exp(w)
        p /= p.sum()
        mean = float(np.dot(p, self.pos))
        var = float(np.dot(p, self.pos * self.pos)) - mean * mean
        return mean, max(var, 0.0)


class _ParametricTilt:
    """Tilted moments of a symmetric density by shifted adaptive quadrature."""

    def __init__(self, step):
        self.step = step
        self._cache: dict[float, tuple[float, float, float]] = {}

    def _half_line(self, t: float) -> tuple[float, float, float, float]:
        """Shifted integrals of dens(z) e^{t z} z^j on z >= 0, j = 0, 1, 2.

        Returns (M, N0, N1, N2) with the true integrals equal to e^M * Nj.
        """
        step = self.step

        def log_integrand(z: float) -> float:
            d = float(step.density(z))
            if d <= 0.0:
                return -math.inf
            return math.log(d) + t * z

        # expand until the integrand at the far end is negligible next to the peak
        z_hi = 8.0
        for _ in range(80):
            zs = np.linspace(1e-12, z_hi, 4096)
            g = np.array([log_integrand(z) for z in zs])
            peak = float(np.max(g))
            if g[-1] < peak - 80.0:
                break
            z_hi *= 2.0
        M = peak
        z_peak = float(zs[int(np.argmax(g))])

        def f0(z):
            return math.exp(log_integrand(z) - M)

        opts = dict(epsabs=1e-12, epsrel=1e-12, limit=400, points=[z_peak])
        n0 = integrate.quad(f0, 0.0, z_hi, **opts)[0]
        n1 = integrate.quad(lambda z: z * f0(z), 0.0, z_hi, **opts)[0]
        n2 = integrate.quad(lambda z: z * z * f0(z), 0.0, z_hi, **opts)[0]
        return M, n0, n1, n2

    def _both(self, t: float) -> tuple[float, float, float]:
        """(log psi, tilted mean, tilted variance) at tilt t."""
        if t in self._cache:
            return self._cache[t]
        lo, hi = self.step.mgf_domain
        if not (lo < t < hi):
            return (math.inf, math.nan, math.nan)
        Mp, p0, p1, p2 = self._half_line(abs(t))
        Mm, m0, m1, m2 = self._half_line(-abs(t))
        # combine the two half-lines; the negative-z side mirrors the -t one
        shift = max(Mp, Mm)
        wp = math.exp(Mp - shift)
        wm = math.exp(Mm - shift)
        z0 = wp * p0 + wm * m0
        z1 = wp * p1 - wm * m1
        z2 = wp * p2 + wm * m2
        log_psi = shift + math.log(z0)
        mean = z1 / z0
        var = max(z2 / z0 - mean * mean, 0.0)
        if t < 0.0:
            mean = -mean
        out = (log_psi, mean, var)
        self._cache[t] = out
        return out

    def log_psi(self, t: float) -> float:
        return self._both(t)[0]

    def moments(self, t: float) -> tuple[float, float]:
        _, mean, var = self._both(t)
        return mean, var


def _tilt_ops(step: StepLaw):
    ops = step.__dict__.get("_tilt_ops")
    if ops is None:
        ops = _LatticeTilt(step) if isinstance(step, LatticePMF) else _ParametricTilt(step)
        step.__dict__["_tilt_ops"] = ops
    return ops


def log_mgf(step: StepLaw, t: float) -> float:
    """log E[e^{t X}]; +inf outside the finite-mgf domain."""
    t = float(t)
    if t == 0.0:
        return 0.0
    lo, hi = step.mgf_domain
    if not (lo < t < hi):
        return math.inf
    return _tilt_ops(step).log_psi(t)


def solve_tilt(step: StepLaw, x: float) -> float:
    """The tilt t with tilted mean psi'(t)/psi(t) = x; Newton inside a bracket."""
    ops = _tilt_ops(step)
    x = float(x)
    if x == 0.0:
        return 0.0
    # search on u > 0 with an increasing objective; u = t for x > 0, u = -t below
    dom_lo, dom_hi = step.mgf_domain
    if x > 0.0:
        edge = dom_hi
        mean_at = lambda u: ops.moments(u)[0]
        var_at = lambda u: ops.moments(u)[1]
    else:
        edge = -dom_lo
        mean_at = lambda u: -ops.moments(-u)[0]
        var_at = lambda u: ops.moments(-u)[1]
    target = abs(x)
    lo_u = 0.0
    hi_u = None
    if math.isinf(edge):
        cand = 1.0
        for _ in range(200):
            if mean_at(cand) >= target:
                hi_u = cand
                break
            lo_u = cand
            cand *= 2.0
        if hi_u is None:
            raise OutOfRange(f"no tilt reaches mean {x!r}; level outside the support hull")
    else:
        for j in range(1, 60):
            cand = edge * (1.0 - 2.0 ** (-j))
            if mean_at(cand) >= target:
                hi_u = cand
                break
            lo_u = cand
        if hi_u is None:
            raise OutOfRange(f"tilted mean never reaches {x!r} inside the finite mgf domain")
    root = newton_bracketed(lambda u: mean_at(u) - target, var_at, lo_u, hi_u, xtol=1e-14)
    return root if x > 0.0 else -root


def rate_I(step: StepLaw, x: float) -> float:
    """Legendre transform sup_t (t x - log psi(t)) of the step log-mgf.

    +inf strictly outside the support hull; at a finite support edge with an
    atom it equals -log(mass at the edge).
    """
    x = float(x)
    if isinstance(step, LatticePMF):
        tol = 1e-9 * step.span
        lo_edge = -step.L
        hi_edge = step.R
        if x < lo_edge - tol or x > hi_edge + tol:
            return math.inf
        if abs(x - hi_edge) <= tol:
            a = step.atom_at(hi_edge)
            return -math.log(a) if a > 0.0 else math.inf
        if abs(x - lo_edge) <= tol:
            a = step.atom_at(lo_edge)
            return -math.log(a) if a > 0.0 else math.inf
    t = solve_tilt(step, x)
    return t * x - log_mgf(step, t)


def speed_x_star(model_or_off, step: StepLaw | None = None) -> tuple[float, bool]:
    """Positive root of I(x) = log m, and whether it sits on the support edge.

    Accepts a Model or an (offspring, step) pair. When the edge atom is heavy
    enough that m * P(X = R) >= 1 the root is the edge itself and no finite
    tilt exists; the second element of the returned pair is True in that case.
    """
    if step is None:
        off = model_or_off.off
        step = model_or_off.step
    else:
        off = model_or_off
    log_m = math.log(off.m)
    if isinstance(step, LatticePMF):
        a_edge = step.atom_at(step.R)
        if a_edge > 0.0 and -math.log(a_edge) <= log_m:
            return step.R, True
        hi = step.R
    else:
        hi = 1.0
        for _ in range(200):
            if rate_I(step, hi) > log_m:
                break
            hi *= 2.0
        else:
            raise FormulaMismatch("rate function failed to exceed log m at any level")
    g = lambda x: rate_I(step, x) - log_m
    x = bisect_root(g, 0.0, hi, xtol=1e-13)
    # Newton polish: d/dx I = tilt(x), quadratic convergence from the bisection seed
    for _ in range(4):
        t = solve_tilt(step, x)
        resid = t * x - log_mgf(step, t) - log_m
        if t <= 0.0:
            break
        x_new = x - resid / t
        if not (0.0 < x_new < hi * (1.0 + 1e-12)):
            break
        x = x_new
    resid = abs(rate_I(step, x) - log_m)
    if resid > 1e-9:
        raise FormulaMismatch(f"speed residual {resid!r} exceeds 1e-9")
    return x, False


def theta_star(model: Model) -> float:
    """The tilt paired with the speed; refuses degenerate boundary models."""
    if model.consts.degenerate:
        raise DegenerateBoundary(
            "speed sits on the step support edge; no finite tilt solves the speed equation")
    return model.consts.theta_star


def m_n(model: Model, n: int) -> float:
    """Median-order centering x* n - (3 / (2 theta*)) log n."""
    n = int(n)
    if n < 1:
        raise OutOfRange(f"generation count must be >= 1, got {n}")
    th = theta_star(model)
    return model.consts.x_star * n - 1.5 / th * math.log(n)


def rate_bounded(model: Model, x: float) -> float:
    """Linear-deviation decay rate (x* - x) log b / (x* + L) on [-L, x*].

    Needs a step bounded below and a doubling offspring minimum (b >= 2).
    At the left edge an atom at -L is required for the formula to hold.
    """
    consts = model.consts
    if not math.isfinite(consts.L):
        raise OutOfRange("bounded-deviation rate needs a step bounded below (L < inf)")
    if model.off.b < 2:
        raise RequiresBoettcher(f"need min child count >= 2, got b = {model.off.b}")
    x = float(x)
    xs, L = consts.x_star, consts.L
    tol = 1e-9 * max(1.0, L + xs)
    if x < -L - tol or x > xs + tol:
        raise OutOfRange(f"x = {x!r} outside [-L, x*] = [{-L!r}, {xs!r}]")
    if abs(x + L) <= tol:
        atom = model.step.atom_at(-L) if isinstance(model.step, LatticePMF) else 0.0
        if atom <= 0.0:
            raise AtomRequired(f"no atom at the left support edge -L = {-L!r}")
        x = -L
    if x > xs:
        x = xs
    return (xs - x) * math.log(model.off.b) / (xs + L)


def beta_moderate(model: Model) -> float:
    """Moderate-band exponent log b / (x* + L); strictly between 0 and theta*."""
    consts = model.consts
    if not math.isfinite(consts.L):
        raise OutOfRange("moderate band exponent needs a step bounded below (L < inf)")
    if model.off.b < 2:
        raise RequiresBoettcher(f"need min child count >= 2, got b = {model.off.b}")
    th = theta_star(model)
    beta = math.log(model.off.b) / (consts.x_star + consts.L)
    if not (0.0 < beta < th):
        raise FormulaMismatch(
            f"band exponent {beta!r} escaped (0, theta*) with theta* = {th!r}")
    return beta


# ---------------------------------------------------------------------------
# closed-form deviation and small-ball constants


def _check_b(b: float) -> float:
    b = float(b)
    if not (math.isfinite(b) and b > 1.0):
        raise ValidationError(f"branching factor must exceed 1, got {b!r}")
    return b


def rate_weibull(alpha: float, lam: float, b: float) -> float:
    """Moderate-deviation constant lam (b^{1/(alpha-1)} - 1)^{alpha-1}.

    alpha = 1 returns lam * b, the limit of the expression as alpha drops to 1.
    """
    alpha = float(alpha)
    lam = float(lam)
    b = _check_b(b)
    if alpha < 1.0:
        raise OutOfRange(f"tail exponent must be >= 1, got {alpha!r}")
    if lam <= 0.0:
        raise ValidationError(f"tail scale must be positive, got {lam!r}")
    if alpha == 1.0:
        return lam * b
    return lam * (b ** (1.0 / (alpha - 1.0)) - 1.0) ** (alpha - 1.0)


def rate_gumbel(alpha: float, b: float) -> float:
    """Moderate-deviation constant ((1+alpha)/alpha * log b)^{alpha/(alpha+1)}."""
    alpha = float(alpha)
    b = _check_b(b)
    if alpha <= 0.0:
        raise OutOfRange(f"tail exponent must be positive, got {alpha!r}")
    return ((1.0 + alpha) / alpha * math.log(b)) ** (alpha / (alpha + 1.0))


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not (math.isfinite(theta) and theta > 0.0):
        raise DegenerateBoundary(f"need a finite positive tilt, got {theta!r}")
    return theta


def smallball_weibull(alpha: float, lam: float, b: float, theta: float) -> float:
    """Small-ball exponent lam theta^{-alpha} (b^{1/(alpha-1)} - 1)^{alpha-1}."""
    theta = _check_theta(theta)
    return rate_weibull(alpha, lam, b) / theta ** float(alpha)


def smallball_gumbel(alpha: float, b: float, theta: float) -> float:
    """Small-ball exponent ((1+alpha)/(theta alpha) * log b)^{alpha/(alpha+1)}."""
    alpha = float(alpha)
    b = _check_b(b)
    theta = _check_theta(theta)
    if alpha <= 0.0:
        raise OutOfRange(f"tail exponent must be positive, got {alpha!r}")
    return ((1.0 + alpha) / (theta * alpha) * math.log(b)) ** (alpha / (alpha + 1.0))


def smallball_bounded_exponent(beta: float, theta: float) -> float:
    """Polynomial small-ball exponent beta / (theta - beta), needs 0 < beta < theta."""
    beta = float(beta)
    theta = _check_theta(theta)
    if not (0.0 < beta < theta):
        raise OutOfRange(f"need 0 < beta < theta, got beta = {beta!r}, theta = {theta!r}")
    return beta / (theta - beta)


# ---------------------------------------------------------------------------
# Schroeder-regime variational rates

_A_EPS = 1e-12  # positive floor keeping 1/a finite in the variational objectives
_SUP_CAP = 1e9  # expansion cap when the supremum may sit at infinity


def _require_schroder(model: Model) -> float:
    """Gate + thin-tree decay rate gamma (may be -inf, never an error here)."""
    schroder_gamma(model.off)  # raises NotSchroeder outside the regime
    return model.consts.gamma


def schroder_H(model: Model, ell_star: float) -> RateReport:
    """Concave sublinear-deviation functional H(ell*) <= 0.

    H(ell*) = sup over a >= max(ell*, eps) of (gamma - I(x* - a)) / a, where
    the feasible a stop at x* + L for steps bounded below. Returns -inf with a
    flag when gamma = -inf (thin trees carry no mass at any order).
    """
    ell_star = float(ell_star)
    if ell_star < 0.0 or not math.isfinite(ell_star):
        raise OutOfRange(f"normalized depth must be finite and >= 0, got {ell_star!r}")
    gamma = _require_schroder(model)
    consts = model.consts
    params = {"ell_star": ell_star, "gamma": gamma, "x_star": consts.x_star}
    if gamma == -math.inf:
        return RateReport("schroder_H", -math.inf, params,
                          {"flag": "gamma is -inf; the rate is -inf at every depth"})
    step = model.step
    a_lo = max(ell_star, _A_EPS)
    capped = False
    if math.isfinite(consts.L):
        a_hi = consts.x_star + consts.L
        if a_lo > a_hi + 1e-12:
            raise EmptyFeasible(
                f"no feasible displacement: need a <= x* + L = {a_hi!r}, got lower bound {a_lo!r}")
        a_hi = max(a_hi, a_lo)
    else:
        a_hi = max(4.0 * a_lo, 8.0)

    def objective(a: float) -> float:
        return (gamma - rate_I(step, consts.x_star - a)) / a

    while True:
        arg, val = grid_then_golden_max(objective, a_lo, a_hi, npoints=1024, xtol=1e-10)
        if math.isfinite(consts.L) or arg < 0.98 * a_hi:
            break
        if a_hi >= _SUP_CAP:
            capped = True
            break
        a_hi *= 4.0
    if val > 1e-10:
        raise FormulaMismatch(f"H(ell*) = {val!r} > 0; gamma or I is inconsistent")
    trace = {"argmax_a": arg, "feasible": [a_lo, a_hi], "residual_tol": 1e-10}
    if capped:
        trace["flag"] = f"supremum still climbing at the expansion cap a = {a_hi!r}"
    return RateReport("schroder_H", val, params, trace)


def schroder_linear_rate(model: Model, x: float) -> RateReport:
    """Linear-deviation rate for the surviving process, two routes cross-checked.

    Route A: (x* - x) * sup over a in [-L, x] of (gamma - I(a)) / (x* - a).
    Route B: - inf over t in [(x*-x)/(x*+L), 1] of (-t gamma + t I(x* + (x-x*)/t)).
    The two parametrize the same variational problem; they are computed by
    independent searches and must agree to 1e-6, else FormulaMismatch.
    """
    x = float(x)
    gamma = _require_schroder(model)
    consts = model.consts
    xs = consts.x_star
    if x >= xs:
        raise OutOfRange(f"linear level must sit below the speed, got x = {x!r} >= {xs!r}")
    params = {"x": x, "gamma": gamma, "x_star": xs}
    if gamma == -math.inf:
        return RateReport("schroder_linear_rate", -math.inf, params,
                          {"flag": "gamma is -inf; the rate is -inf at every level"})
    step = model.step
    bounded = math.isfinite(consts.L)
    if bounded and x < -consts.L - 1e-12:
        raise EmptyFeasible(
            f"level {x!r} lies below -L = {-consts.L!r}: the event is impossible")

    # route A over the displacement value a
    a_hi = x
    capped = False
    if bounded:
        a_lo = -consts.L
    else:
        a_lo = x - max(8.0, 4.0 * (xs - x))

    def route_a(a: float) -> float:
        return (gamma - rate_I(step, a)) / (xs - a)

    while True:
        arg_a, sup_a = grid_then_golden_max(route_a, a_lo, a_hi, npoints=160, xtol=1e-10)
        if bounded or arg_a > a_lo + 0.02 * (a_hi - a_lo):
            break
        if a_lo <= -_SUP_CAP:
            capped = True
            break
        a_lo = a_hi - 4.0 * (a_hi - a_lo)
    value_a = (xs - x) * sup_a

    # route B over the time fraction t spent on the detour
    t_lo = (xs - x) / (xs + consts.L) if bounded else 1e-8
    t_lo = min(max(t_lo, 1e-12), 1.0)

    def route_b(t: float) -> float:
        return -t * gamma + t * rate_I(step, xs + (x - xs) / t)

    _, inf_b = grid_then_golden_min(route_b, t_lo, 1.0, npoints=160, xtol=1e-10)
    value_b = -inf_b

    if abs(value_a - value_b) > 1e-6:
        raise FormulaMismatch(
            f"variational routes disagree: {value_a!r} vs {value_b!r}")
    trace = {"argmax_a": arg_a, "route_a": value_a, "route_b": value_b,
             "agreement": abs(value_a - value_b)}
    if capped:
        trace["flag"] = "route A supremum still climbing at the expansion cap"
    return RateReport("schroder_linear_rate", value_a, params, trace)


def large_dev_rate(model: Model, x: float) -> float:
    """Upper-deviation exponent log m - I(x) for levels above the speed."""
    x = float(x)
    xs = model.consts.x_star
    if x <= xs:
        raise OutOfRange(f"level must exceed the speed x* = {xs!r}, got {x!r}")
    return model.consts.log_m - rate_I(model.step, x)


def schroder_t_star(model: Model) -> RateReport:
    """Root of gamma + t x* + log psi(-t) = 0 on t > 0.

    The left side is convex in t, negative at 0 (it equals gamma < 0), and has
    derivative x* - (tilted mean at -t) >= x* > 0, so the root is unique when
    it exists. If the mgf domain ends before the sign change, raises NoRoot.
    """
    gamma = _require_schroder(model)
    consts = model.consts
    if gamma == -math.inf:
        raise NoRoot("gamma is -inf: the defining equation has no finite root")
    if consts.degenerate:
        raise DegenerateBoundary("degenerate boundary model has no tilt scale")
    step = model.step
    xs = consts.x_star
    ops = _tilt_ops(step)

    def g(t: float) -> float:
        return gamma + t * xs + log_mgf(step, -t)

    def dg(t: float) -> float:
        return xs - ops.moments(-t)[0]

    dom_lo, _ = step.mgf_domain
    t_edge = -dom_lo  # ψ(-t) finite for t < t_edge
    lo, hi = 0.0, None
    if math.isinf(t_edge):
        cand = 1.0
        for _ in range(200):
            if g(cand) >= 0.0:
                hi = cand
                break
            lo = cand
            cand *= 2.0
    else:
        for j in range(1, 60):
            cand = t_edge * (1.0 - 2.0 ** (-j))
            if g(cand) >= 0.0:
                hi = cand
                break
            lo = cand
    if hi is None:
        raise NoRoot("no sign change inside the finite part of the mgf domain")
    root = newton_bracketed(g, dg, lo, hi, xtol=1e-14)
    resid = abs(g(root))
    if resid > 1e-10:
        raise FormulaMismatch(f"t* residual {resid!r} exceeds 1e-10")
    finite_beyond = math.isinf(t_edge) or root < t_edge * (1.0 - 1e-12)
    return RateReport(
        "schroder_t_star", root,
        {"gamma": gamma, "x_star": xs},
        {"residual": resid, "mgf_finite_beyond_root": finite_beyond})


def min_energy_bound(alpha: float, b: int, s: int, horizon: int, c: float) -> EnergyBound:
    """Minimum of sum_k b^k x_k^alpha over schedules with sum x_k = c.

    The analytic lower bound is c^alpha (b^{1/(alpha-1)} - 1)^{alpha-1}; the
    numerical side evaluates the exact Lagrange-stationary schedule on the
    finite horizon, which is larger by the factor (1 - b_alpha^{-horizon})
    raised to 1 - alpha. Asserts numerical >= analytic - 1e-9 before
    returning. ``s`` only feeds the convenience pruning factor (1 - b^{-s})
    reported alongside; the caller applies it where needed.
    """
    alpha = float(alpha)
    c = float(c)
    if alpha <= 1.0:
        raise OutOfRange(f"energy exponent must exceed 1, got {alpha!r}")
    if int(b) != b or b < 2:
        raise ValidationError(f"branching factor must be an integer >= 2, got {b!r}")
    b = int(b)
    s = int(s)
    horizon = int(horizon)
    if not (1 <= s <= horizon):
        raise OutOfRange(f"need 1 <= s <= horizon, got s = {s}, horizon = {horizon}")
    if not (math.isfinite(c) and c > 0.0):
        raise ValidationError(f"total displacement must be positive, got {c!r}")

    log_b = math.log(b)
    log_ba = log_b / (alpha - 1.0)
    b_alpha = math.exp(log_ba)
    analytic = c ** alpha * (b_alpha - 1.0) ** (alpha - 1.0)

    depletion = 1.0 - b_alpha ** (-horizon)
    log_x0 = math.log(c) + math.log(b_alpha - 1.0) - math.log(depletion)
    schedule = tuple(math.exp(log_x0 - k * log_ba) for k in range(1, horizon + 1))
    # energy terms in logs: b^k x_k^alpha = exp(k log b + alpha log x_k)
    numerical = math.fsum(
        math.exp(k * log_b + alpha * (log_x0 - k * log_ba)) for k in range(1, horizon + 1))
    if numerical < analytic - 1e-9 * max(1.0, analytic):
        raise FormulaMismatch(
            f"numerical energy {numerical!r} fell below the analytic bound {analytic!r}")
    return EnergyBound(
        analytic=analytic, numerical=numerical, schedule=schedule,
        pruned_factor=1.0 - float(b) ** (-s), margin=numerical - analytic)
