"""Offspring and displacement laws plus the derived model constants.

The model layer owns everything the rest of the package takes as given: a
supercritical finite-support offspring law, a centered displacement law, and
the constants derived from the pair (speed, tilt, support edges, extinction
probability), together with pass/fail flags for the standing assumptions.

Conventions used throughout:

* ``f`` is the offspring generating function, ``m = f'(1) > 1`` its mean,
  ``b`` the smallest child count with positive mass, ``q`` the extinction
  probability (smallest fixed point of ``f`` on [0, 1]).
* ``gamma = log f'(q)``, the decay rate of thin trees. It is ``-inf`` exactly
  when ``f'(q) = 0``, which we keep as an explicit marker rather than an error.
* Displacements are centered: mean zero is enforced at validation time.
  ``L`` is the essential infimum of ``-X`` (so the walk support is bounded
  below by ``-L`` per step) and ``R`` the essential supremum of ``X``; either
  may be ``inf`` for the parametric tail families.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateBoundary,
    EmptySupport,
    FormulaMismatch,
    NonZeroMean,
    NotSchroeder,
    SubcriticalModel,
    ValidationError,
)

__all__ = [
    "OffspringLaw",
    "StepLaw",
    "LatticePMF",
    "WeibullTail",
    "GumbelTail",
    "AssumptionFlag",
    "ModelConstants",
    "Model",
    "validate_model",
    "extinction_probability",
    "schroder_gamma",
    "model_from_config",
    "load_model_file",
    "floor_to_lattice",
]

_PMF_SUM_TOL = 1e-12
_MEAN_TOL = 1e-12


def _as_prob(value) -> float:
    """Accept numbers or decimal strings; reject negatives and non-finite values."""
    p = float(value)
    if not math.isfinite(p) or p < 0.0:
        raise ValidationError(f"probability must be a finite nonnegative number, got {value!r}")
    return p


class OffspringLaw:
    """Finite-support child-count distribution.

    ``pmf`` maps child count k >= 0 to probability. Entries with zero mass are
    dropped; the remaining masses must sum to 1 within 1e-12.
    """

    def __init__(self, pmf):
        cleaned: dict[int, float] = {}
        for k, v in pmf.items():
            kk = int(k)
            if kk < 0:
                raise ValidationError(f"child count must be >= 0, got {kk}")
            p = _as_prob(v)
            if p > 0.0:
                cleaned[kk] = cleaned.get(kk, 0.0) + p
        if not cleaned:
            raise EmptySupport("offspring pmf has no positive mass")
        total = math.fsum(cleaned.values())
        if abs(total - 1.0) > _PMF_SUM_TOL:
            raise ValidationError(f"offspring pmf sums to {total!r}, not 1 within {_PMF_SUM_TOL}")
        self.pmf: dict[int, float] = dict(sorted(cleaned.items()))
        self.max_k: int = max(self.pmf)
        # dense coefficient array c[k] = p_k, k = 0..max_k
        self.coeffs: np.ndarray = np.zeros(self.max_k + 1)
        for k, p in self.pmf.items():
            self.coeffs[k] = p
        self._q: float | None = None

    @property
    def m(self) -> float:
        """Mean child count f'(1)."""
        return math.fsum(k * p for k, p in self.pmf.items())

    @property
    def b(self) -> int:
        """Smallest child count with positive mass."""
        return min(self.pmf)

    @property
    def b_1(self) -> float:
        """Mass at the smallest child count, P(Z = b)."""
        return self.pmf[self.b]

    @property
    def xi_moment_ok(self) -> bool:
        # finite support: every moment of Z is finite, nothing to check
        return True

    def pgf(self, s):
        """f(s) = sum_k p_k s^k; accepts scalars or arrays."""
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def pgf_prime(self, s):
        """f'(s)."""
        der = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(s, der)

    @property
    def q(self) -> float:
        """Extinction probability; cached."""
        if self._q is None:
            self._q = extinction_probability(self)
        return self._q

    @property
    def gamma(self) -> float:
        """log f'(q), the thin-tree decay rate; -inf exactly when f'(q) = 0."""
        fpq = self.pgf_prime(self.q)
        if fpq <= 0.0:
            return -math.inf
        return math.log(float(fpq))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {p:g}" for k, p in self.pmf.items())
        return f"OffspringLaw({{{inner}}})"


def extinction_probability(off: OffspringLaw) -> float:
    """Smallest fixed point of the offspring pgf on [0, 1].

    Monotone iteration from 0 climbs to q; once per-step progress stalls, a
    bisection on f(s) - s polishes the root so the residual |f(q) - q| is
    below 1e-12. Requires a supercritical law.
    """
    if off.m <= 1.0:
        raise SubcriticalModel(f"offspring mean {off.m!r} <= 1; extinction is certain")
    if 0 not in off.pmf:
        return 0.0
    s = 0.0
    for _ in range(200000):
        s_next = float(off.pgf(s))
        if s_next - s < 1e-15:
            s = s_next
            break
        s = s_next
    # bracket [s, hi] with f(s)-s >= 0 > f(hi)-hi, then bisect
    g = lambda x: float(off.pgf(x)) - x
    hi = None
    for j in range(8, 54):
        cand = 1.0 - 2.0 ** (-j)
        if cand > s and g(cand) < 0.0:
            hi = cand
            break
    if hi is None:
        q = s  # root indistinguishable from the iteration's limit at float precision
    else:
        from .optim import bisect_root

        q = bisect_root(g, s, hi, xtol=1e-16, rtol=0.0)
    if abs(g(q)) > 1e-12:
        raise FormulaMismatch(f"extinction probability residual {g(q)!r} exceeds 1e-12")
    return q


def schroder_gamma(off: OffspringLaw) -> float:
    """log f'(q) for a Schroeder offspring law (0 < p0 + p1 < 1).

    Raises NotSchroeder outside that regime. Returns -inf if f'(q) = 0,
    which cannot happen for a valid supercritical Schroeder law but is kept
    as an explicit marker rather than a crash.
    """
    p01 = off.pmf.get(0, 0.0) + off.pmf.get(1, 0.0)
    if p01 <= 0.0 or p01 >= 1.0:
        raise NotSchroeder(
            f"need 0 < p0 + p1 < 1 for thin trees; got p0 + p1 = {p01!r}")
    return off.gamma


class StepLaw:
    """Common interface of displacement laws. Concrete kinds below."""

    kind: str = "abstract"

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def L(self) -> float:
        """Essential supremum of -X: walk steps never go below -L."""
        raise NotImplementedError

    @property
    def R(self) -> float:
        """Essential supremum of X."""
        raise NotImplementedError

    @property
    def mgf_domain(self) -> tuple[float, float]:
        """Open interval where E[e^{tX}] is finite."""
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def log_cdf(self, x: float) -> float:
        """log P(X <= x), exact in the deep left tail."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


class LatticePMF(StepLaw):
    """Displacement supported on span * Z with finitely many atoms.

    ``pmf`` maps integer offsets j to probabilities; positions are j * span.
    Mass must sum to 1 within 1e-12 and the mean must vanish within 1e-12,
    and there must be mass on both sides of zero (otherwise the walk is
    monotone and the speed degenerates to a support edge).
    """

    kind = "lattice"

    def __init__(self, span: float, pmf):
        span = float(span)
        if not (math.isfinite(span) and span > 0.0):
            raise ValidationError(f"lattice span must be positive and finite, got {span!r}")
        cleaned: dict[int, float] = {}
        for j, v in pmf.items():
            jj = int(j)
            p = _as_prob(v)
            if p > 0.0:
                cleaned[jj] = cleaned.get(jj, 0.0) + p
        if not cleaned:
            raise EmptySupport("lattice step pmf has no positive mass")
        total = math.fsum(cleaned.values())
        if abs(total - 1.0) > _PMF_SUM_TOL:
            raise ValidationError(f"step pmf sums to {total!r}, not 1 within {_PMF_SUM_TOL}")
        if min(cleaned) >= 0 or max(cleaned) <= 0:
            raise EmptySupport("step law needs mass on both sides of zero")
        self.span = span
        self.offsets = np.array(sorted(cleaned), dtype=np.int64)
        self.probs = np.array([cleaned[int(j)] for j in self.offsets])
        self.log_probs = np.log(self.probs)
        mu = self.span * math.fsum(float(j) * cleaned[int(j)] for j in self.offsets)
        if abs(mu) > _MEAN_TOL:
            raise NonZeroMean(f"step mean {mu!r} exceeds the 1e-12 centering tolerance")

    @property
    def mean(self) -> float:
        return self.span * float(np.dot(self.offsets.astype(float), self.probs))

    @property
    def positions(self) -> np.ndarray:
        return self.offsets * self.span

    @property
    def L(self) -> float:
        return -float(self.offsets[0]) * self.span

    @property
    def R(self) -> float:
        return float(self.offsets[-1]) * self.span

    @property
    def mgf_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def atom_at(self, x: float) -> float:
        """Mass at the lattice point nearest x, 0 if x is off-lattice."""
        j = round(x / self.span)
        if abs(x - j * self.span) > 1e-9 * self.span:
            return 0.0
        hits = np.nonzero(self.offsets == j)[0]
        return float(self.probs[hits[0]]) if hits.size else 0.0

    def cdf(self, x: float) -> float:
        sel = self.positions <= x + 1e-12 * self.span
        return float(np.sum(self.probs[sel]))

    def log_cdf(self, x: float) -> float:
        sel = self.positions <= x + 1e-12 * self.span
        if not np.any(sel):
            return -math.inf
        w = self.log_probs[sel]
        mx = float(np.max(w))
        return mx + math.log(float(np.sum(np.exp(w - mx))))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return self.positions[idx]

    def __repr__(self) -> str:
        inner = ", ".join(f"{int(j)}: {p:g}" for j, p in zip(self.offsets, self.probs))
        return f"LatticePMF(span={self.span:g}, {{{inner}}})"


class WeibullTail(StepLaw):
    """Symmetric law with stretched-exponential tails.

    P(X <= -z) = P(X >= z) = 0.5 * exp(-lam * z^alpha) for z >= 0, with
    alpha >= 1 and lam > 0. Unbounded on both sides; the mgf is finite
    everywhere when alpha > 1 and exactly on (-lam, lam) when alpha = 1.
    """

    kind = "weibull"

    def __init__(self, alpha: float, lam: float):
        alpha = float(alpha)
        lam = float(lam)
        if not (math.isfinite(alpha) and alpha >= 1.0):
            raise ValidationError(f"weibull tail exponent must be >= 1, got {alpha!r}")
        if not (math.isfinite(lam) and lam > 0.0):
            raise ValidationError(f"weibull scale must be positive, got {lam!r}")
        self.alpha = alpha
        self.lam = lam

    @property
    def mean(self) -> float:
        return 0.0  # exact by symmetry

    @property
    def L(self) -> float:
        return math.inf

    @property
    def R(self) -> float:
        return math.inf

    @property
    def mgf_domain(self) -> tuple[float, float]:
        if self.alpha == 1.0:
            return (-self.lam, self.lam)
        return (-math.inf, math.inf)

    def log_sf_abs(self, z: float) -> float:
        """log P(X >= z) for z >= 0."""
        return math.log(0.5) - self.lam * z ** self.alpha

    def cdf(self, x: float) -> float:
        if x <= 0.0:
            return 0.5 * math.exp(-self.lam * (-x) ** self.alpha)
        return 1.0 - 0.5 * math.exp(-self.lam * x ** self.alpha)

    def log_cdf(self, x: float) -> float:
        if x <= 0.0:
            return math.log(0.5) - self.lam * (-x) ** self.alpha
        return math.log1p(-0.5 * math.exp(-self.lam * x ** self.alpha))

    def density(self, z):
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        return 0.5 * self.lam * self.alpha * az ** (self.alpha - 1.0) * np.exp(-self.lam * az ** self.alpha)

    def tail_quantile(self, p: float) -> float:
        """z >= 0 with P(X <= -z) = p; requires 0 < p <= 1/2."""
        if not 0.0 < p <= 0.5:
            raise ValidationError(f"tail quantile needs 0 < p <= 1/2, got {p!r}")
        return (-math.log(2.0 * p) / self.lam) ** (1.0 / self.alpha)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        out = np.empty(size)
        lo = u < 0.5
        out[lo] = -((-np.log(2.0 * u[lo]) / self.lam) ** (1.0 / self.alpha))
        out[~lo] = (-np.log(2.0 * (1.0 - u[~lo])) / self.lam) ** (1.0 / self.alpha)
        return out

    def __repr__(self) -> str:
        return f"WeibullTail(alpha={self.alpha:g}, lam={self.lam:g})"


class GumbelTail(StepLaw):
    """Symmetric law with doubly exponential tails.

    P(X <= -z) = P(X >= z) = 0.5 * exp(1 - e^{z^alpha}) for z >= 0, alpha > 0.
    The mgf is finite on the whole line for every alpha.
    """

    kind = "gumbel"

    def __init__(self, alpha: float):
        alpha = float(alpha)
        if not (math.isfinite(alpha) and alpha > 0.0):
            raise ValidationError(f"gumbel tail exponent must be positive, got {alpha!r}")
        self.alpha = alpha

    @property
    def mean(self) -> float:
        return 0.0  # exact by symmetry

    @property
    def L(self) -> float:
        return math.inf

    @property
    def R(self) -> float:
        return math.inf

    @property
    def mgf_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def log_sf_abs(self, z: float) -> float:
        """log P(X >= z) for z >= 0."""
        w = z ** self.alpha
        if w > 700.0:
            return -math.inf
        return math.log(0.5) + 1.0 - math.exp(w)

    def cdf(self, x: float) -> float:
        if x <= 0.0:
            ls = self.log_sf_abs(-x)
            return math.exp(ls) if ls > -745.0 else 0.0
        return 1.0 - self.cdf(-x)

    def log_cdf(self, x: float) -> float:
        if x <= 0.0:
            return self.log_sf_abs(-x)
        t = self.cdf(-x)
        return math.log1p(-t)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        w = az ** self.alpha
        w = np.minimum(w, 700.0)  # beyond this the factor exp(1-e^w) is a hard zero
        return 0.5 * self.alpha * az ** (self.alpha - 1.0) * np.exp(w) * np.exp(1.0 - np.exp(w))

    def tail_quantile(self, p: float) -> float:
        if not 0.0 < p <= 0.5:
            raise ValidationError(f"tail quantile needs 0 < p <= 1/2, got {p!r}")
        return math.log1p(-math.log(2.0 * p)) ** (1.0 / self.alpha)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        out = np.empty(size)
        lo = u < 0.5
        out[lo] = -(np.log1p(-np.log(2.0 * u[lo])) ** (1.0 / self.alpha))
        out[~lo] = np.log1p(-np.log(2.0 * (1.0 - u[~lo]))) ** (1.0 / self.alpha)
        return out

    def __repr__(self) -> str:
        return f"GumbelTail(alpha={self.alpha:g})"


def floor_to_lattice(x: float, span: float) -> int:
    """Largest lattice offset j with j * span <= x, snapping near-hits exactly on."""
    t = x / span
    j = round(t)
    if abs(t - j) <= 1e-9:
        return int(j)
    return int(math.floor(t))


@dataclass
class AssumptionFlag:
    ok: bool
    why: str

    def as_dict(self) -> dict:
        return {"ok": self.ok, "why": self.why}


@dataclass
class ModelConstants:
    """Derived constants of a validated model.

    ``theta_star`` is +inf and ``degenerate`` True when the speed sits on the
    right support edge of the displacement law, in which case no finite tilt
    solves the speed equation and tilt-based quantities refuse to evaluate.
    """

    x_star: float
    theta_star: float
    log_m: float
    L: float
    R: float
    q: float
    gamma: float
    degenerate: bool
    m: float
    b: int
    flags: dict[str, AssumptionFlag] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "x_star": self.x_star,
            "theta_star": self.theta_star,
            "log_m": self.log_m,
            "L": self.L,
            "R": self.R,
            "q": self.q,
            "gamma": self.gamma,
            "degenerate": self.degenerate,
            "m": self.m,
            "b": self.b,
            "assumption_flags": {k: v.as_dict() for k, v in self.flags.items()},
        }


@dataclass
class Model:
    """A validated (offspring, step) pair with its derived constants."""

    off: OffspringLaw
    step: StepLaw
    consts: ModelConstants

    @classmethod
    def build(cls, off: OffspringLaw, step: StepLaw) -> "Model":
        return cls(off, step, validate_model(off, step))


def validate_model(off: OffspringLaw, step: StepLaw) -> ModelConstants:
    """Check the standing assumptions and derive the model constants.

    Raises SubcriticalModel / NonZeroMean / EmptySupport on hard violations.
    Soft diagnostics live in the returned flags: A11 (supercritical with
    finite offspring moments), A12 (centered step with an mgf finite near 0),
    A13 (a finite tilt solves the speed equation), A14 (the tilt is strictly
    inside the mgf domain).
    """
    from . import rates  # deferred: rates imports this module for the law types

    m = off.m
    if m <= 1.0:
        raise SubcriticalModel(f"offspring mean {m!r} <= 1")
    mu = step.mean
    if abs(mu) > _MEAN_TOL:
        raise NonZeroMean(f"step mean {mu!r} exceeds the 1e-12 centering tolerance")

    log_m = math.log(m)
    q = off.q
    gamma = off.gamma
    x_star, at_edge = rates.speed_x_star(off, step)

    if at_edge:
        theta = math.inf
        degenerate = True
    else:
        theta = rates.solve_tilt(step, x_star)
        degenerate = False
        resid = abs(theta * x_star - rates.log_mgf(step, theta) - log_m)
        if resid > 1e-8:
            raise FormulaMismatch(
                f"tilt residual {resid!r} exceeds 1e-8 at theta={theta!r}, x_star={x_star!r}")

    dom = step.mgf_domain
    flags = {
        "A11": AssumptionFlag(
            True,
            f"offspring mean {m:.12g} > 1 with finite support (max child count {off.max_k}), "
            "so every offspring moment is finite"),
        "A12": AssumptionFlag(
            True,
            f"step mean is {mu:.3g} (|mean| <= 1e-12) and the step mgf is finite on "
            f"({dom[0]:.6g}, {dom[1]:.6g}), a neighbourhood of 0"),
        "A13": AssumptionFlag(
            not degenerate,
            ("a finite tilt solves the speed equation" if not degenerate else
             "the speed coincides with the right support edge of the step; "
             "no finite tilt solves the speed equation")),
        "A14": AssumptionFlag(
            (not degenerate) and theta < dom[1],
            (f"tilt {theta:.12g} lies strictly inside the mgf domain "
             f"(right endpoint {dom[1]:.6g})" if (not degenerate) and theta < dom[1]
             else "no finite tilt strictly inside the mgf domain")),
    }

    return ModelConstants(
        x_star=x_star, theta_star=theta, log_m=log_m,
        L=step.L, R=step.R, q=q, gamma=gamma,
        degenerate=degenerate, m=m, b=off.b, flags=flags)


def model_from_config(obj: dict) -> Model:
    """Build a validated model from a config mapping.

    Expected shape::

        {"offspring": {"0": 0.25, "2": 0.75},
         "step": {"kind": "lattice", "span": 1.0,
                  "pmf": {"-1": "0.25", "0": "0.5", "1": "0.25"}}}

    Step kinds: ``lattice`` (span + pmf over integer offsets), ``weibull``
    (alpha, lambda), ``gumbel`` (alpha). Probabilities may be numbers or
    decimal strings.
    """
    if not isinstance(obj, dict):
        raise ValidationError("model config must be a mapping")
    try:
        off_spec = obj["offspring"]
        step_spec = obj["step"]
    except KeyError as exc:
        raise ValidationError(f"model config missing required key {exc}") from None
    off = OffspringLaw(off_spec)
    kind = str(step_spec.get("kind", "lattice")).lower()
    if kind == "lattice":
        if "pmf" not in step_spec:
            raise ValidationError("lattice step config needs a 'pmf' mapping")
        step: StepLaw = LatticePMF(step_spec.get("span", 1.0), step_spec["pmf"])
    elif kind == "weibull":
        step = WeibullTail(step_spec.get("alpha", 1.0), step_spec.get("lambda", 1.0))
    elif kind == "gumbel":
        step = GumbelTail(step_spec.get("alpha", 1.0))
    else:
        raise ValidationError(f"unknown step kind {kind!r}")
    return Model.build(off, step)


def load_model_file(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"model file {path} is not valid JSON: {exc}") from None
    return model_from_config(obj)
