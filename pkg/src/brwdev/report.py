"""Convergence report builders: delimited tables plus rendered figures.

Two report families track how finite-n oracle output approaches the limiting
rates. The moderate family watches the doubly exponential collapse
P(M_n <= m_n - ell) = exp(-exp(ell beta (1 + o(1)))) through the columns
y = log G and y/ell; the linear family compares empirical per-generation (or
per-depth, in the survival-conditioned case) rates against the analytic ones.

Depth schedules ell_n arrive as small descriptor strings; the parser admits
exactly the scales the limiting regimes distinguish (constant * n, constant *
n^p with p in (0, 1], constant * log n) plus explicit value lists, so the
limsup of ell_n / n is always well defined and the moderate gate can refuse
schedules that leave the regime before any grid is built.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import oracle as _oracle
from . import rates as _rates
from .errors import OutOfRange, ValidationError
from .model import Model
from .serial import fmt17

__all__ = [
    "EllSchedule",
    "parse_ell_schedule",
    "ModerateReport",
    "LinearReport",
    "build_moderate_report",
    "build_linear_report",
    "render_moderate_figure",
    "render_linear_figure",
]


@dataclass(frozen=True)
class EllSchedule:
    """A depth schedule ell_n with an analytic limsup of ell_n / n.

    kind is one of "linear" (c * n), "power" (c * n^p, p < 1), "log"
    (c * log n), or "list". Only the linear kind has a positive limsup.
    """

    kind: str
    coefficient: float = 0.0
    power: float = 1.0
    values: tuple = ()
    text: str = ""

    def at(self, n: int) -> float:
        if self.kind == "linear":
            return self.coefficient * n
        if self.kind == "power":
            return self.coefficient * n**self.power
        if self.kind == "log":
            return self.coefficient * math.log(n)
        raise ValidationError("explicit lists pair with the n list; use pairs()")

    def pairs(self, n_list) -> list[tuple[int, float]]:
        """Resolve to (n, ell) pairs against the run's generation list."""
        ns = [int(n) for n in n_list]
        if not ns:
            raise OutOfRange("generation list must not be empty")
        if any(n < 1 for n in ns):
            raise OutOfRange(f"generation counts must be >= 1, got {ns}")
        if self.kind != "list":
            out = [(n, self.at(n)) for n in ns]
        elif len(ns) == 1:
            out = [(ns[0], float(v)) for v in self.values]
        elif len(self.values) == len(ns):
            out = [(n, float(v)) for n, v in zip(ns, self.values)]
        else:
            raise ValidationError(
                f"schedule lists {len(self.values)} depths but the run has "
                f"{len(ns)} generation counts; give one n or matching lengths")
        for n, ell in out:
            if not ell > 0.0:
                raise OutOfRange(f"depth ell must be positive, got {ell!r} at n = {n}")
        return out

    def sup_ratio(self, n_list) -> float:
        """limsup ell_n / n: the coefficient for linear schedules, 0 for the
        sublinear kinds, the finite max for explicit lists."""
        if self.kind == "linear":
            return self.coefficient
        if self.kind == "list":
            return max(ell / n for n, ell in self.pairs(n_list))
        return 0.0


_NUM = r"[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?"
_LINEAR_RE = re.compile(rf"^({_NUM})\*n$")
_POWER_RE = re.compile(rf"^({_NUM})\*n\^({_NUM})$")
_LOG_RE = re.compile(rf"^({_NUM})\*log\(?n?\)?$")


def parse_ell_schedule(text: str) -> EllSchedule:
    """Parse a depth-schedule descriptor.

    Grammar: ``C*n`` | ``C*n^P`` with P in (0, 1] | ``C*log(n)`` |
    ``list:v1,v2,...``. C must be positive.
    """
    raw = text
    s = text.replace(" ", "").lower()
    if s.startswith("list:"):
        body = s[len("list:"):]
        try:
            vals = tuple(float(v) for v in body.split(",") if v != "")
        except ValueError:
            raise ValidationError(f"bad depth list {raw!r}") from None
        if not vals:
            raise ValidationError(f"depth list {raw!r} is empty")
        return EllSchedule(kind="list", values=vals, text=raw)
    m = _POWER_RE.match(s)
    if m:
        c, p = float(m.group(1)), float(m.group(2))
        if not 0.0 < p <= 1.0:
            raise OutOfRange(f"schedule exponent must lie in (0, 1], got {p!r}")
        if p == 1.0:
            return EllSchedule(kind="linear", coefficient=c, text=raw)
        return EllSchedule(kind="power", coefficient=c, power=p, text=raw)
    m = _LINEAR_RE.match(s)
    if m:
        return EllSchedule(kind="linear", coefficient=float(m.group(1)), text=raw)
    m = _LOG_RE.match(s)
    if m:
        return EllSchedule(kind="log", coefficient=float(m.group(1)), text=raw)
    raise ValidationError(
        f"cannot parse depth schedule {raw!r}; expected C*n, C*n^P, "
        f"C*log(n), or list:v1,v2,...")


# ---------------------------------------------------------------------------
# moderate-deviation report


@dataclass
class ModerateReport:
    """Rows (n, ell, G, y, y/ell) plus the pooled slope of y against ell."""

    rows: list
    beta: float
    fit_slope: float
    fit_points: int
    constants: dict = field(default_factory=dict)

    def csv_lines(self) -> list[str]:
        lines = ["n,ell,G,y,y_over_ell,beta_target"]
        for n, ell, g, y, yol in self.rows:
            lines.append(f"{n},{fmt17(ell)},{fmt17(g)},{fmt17(y)},"
                         f"{fmt17(yol)},{fmt17(self.beta)}")
        return lines

    def fit_csv_lines(self) -> list[str]:
        gap = (abs(self.fit_slope - self.beta) / self.beta
               if self.beta != 0.0 and math.isfinite(self.fit_slope) else math.nan)
        return [
            "fit_slope,beta_target,rel_gap,points_used",
            f"{fmt17(self.fit_slope)},{fmt17(self.beta)},{fmt17(gap)},{self.fit_points}",
        ]


def build_moderate_report(model: Model, n_list, schedule: EllSchedule) -> ModerateReport:
    """Oracle table for the dip probabilities P(M_n <= m_n - ell_n).

    Refuses schedules with limsup ell_n / n >= x* + L: beyond that line the
    target sits outside the reachable support and the doubly exponential
    regime no longer applies, so the run would measure nothing.
    """
    consts = model.consts
    if model.off.b < 2:
        raise OutOfRange(
            "the moderate-deviation report needs a doubling minimum offspring "
            f"(b >= 2); this law has b = {model.off.b}")
    edge = consts.x_star + consts.L
    ratio = schedule.sup_ratio(n_list)
    if not ratio < edge:
        raise OutOfRange(
            f"depth schedule {schedule.text or schedule.kind!r} violates the "
            f"moderate-deviation hypothesis limsup ell_n/n < x* + L: "
            f"sup ell_n/n = {ratio:.6g}, x* + L = {edge:.6g}")
    beta = _rates.beta_moderate(model)
    pairs = schedule.pairs(n_list)
    grids: dict[int, _oracle.LogCdfGrid] = {}
    rows = []
    for n, ell in sorted(pairs):
        if n not in grids:
            grids[n] = _oracle.max_cdf_recursion(model, n, keep_direct=False)
        g = grids[n].G_at(_rates.m_n(model, n) - ell)
        y = math.log(g) if g > 0.0 else -math.inf
        rows.append((n, ell, g, y, y / ell))
    ells = [r[1] for r in rows]
    cut = (min(ells) + max(ells)) / 2.0
    top = [(r[1], r[3]) for r in rows if r[1] >= cut and math.isfinite(r[3])]
    if len(top) >= 2 and len(set(e for e, _ in top)) >= 2:
        xs = np.array([e for e, _ in top])
        ys = np.array([y for _, y in top])
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = math.nan
    return ModerateReport(rows=rows, beta=beta, fit_slope=slope,
                          fit_points=len(top), constants=consts.as_dict())


# ---------------------------------------------------------------------------
# linear-deviation report


@dataclass
class LinearReport:
    """Rows (n, x, empirical, analytic, rel gap or None) per grid point."""

    rows: list
    regime: str  # "boettcher" or "schroeder"
    constants: dict = field(default_factory=dict)

    def csv_lines(self) -> list[str]:
        lines = ["n,x,empirical_rate,analytic_rate,rel_gap"]
        for n, x, emp, ana, gap in self.rows:
            gs = "" if gap is None else fmt17(gap)
            lines.append(f"{n},{fmt17(x)},{fmt17(emp)},{fmt17(ana)},{gs}")
        return lines


def build_linear_report(model: Model, n_list, x_grid) -> LinearReport:
    """Empirical vs analytic linear-regime rates on an x grid.

    Doubling laws (b >= 2) compare (1/n) log(-log F_n(xn)) against the
    bounded-deviation rate; Schroeder laws read x as the depth coefficient
    ell* and compare (1/ell_n) log P(M_n <= m_n - ell_n | survival) against
    the variational rate H(ell*). Points where the analytic rate vanishes are
    reported with an empty gap cell instead of a division by zero.
    """
    ns = sorted({int(n) for n in n_list})
    if not ns:
        raise OutOfRange("generation list must not be empty")
    if any(n < 1 for n in ns):
        raise OutOfRange(f"generation counts must be >= 1, got {ns}")
    xs = [float(x) for x in x_grid]
    if not xs:
        raise OutOfRange("x grid must not be empty")
    consts = model.consts
    rows = []
    if model.off.b >= 2:
        regime = "boettcher"
        targets = [(x, _rates.rate_bounded(model, x)) for x in xs]
        for n in ns:
            grid = _oracle.max_cdf_recursion(model, n, keep_direct=False)
            for x, ana in targets:
                g = grid.G_at(x * n)
                emp = math.log(g) / n if g > 0.0 else -math.inf
                gap = abs(emp - ana) / abs(ana) if ana != 0.0 else None
                rows.append((n, x, emp, ana, gap))
    else:
        regime = "schroeder"
        for x in xs:
            if not x > 0.0:
                raise OutOfRange(
                    f"survival-conditioned rates need a positive depth "
                    f"coefficient, got {x!r}")
        targets = [(x, _rates.schroder_H(model, x).value) for x in xs]
        for n in ns:
            grid = _oracle.conditioned_cdf(model, n, keep_direct=False)
            for x, ana in targets:
                ell = x * n
                emp = -grid.conditioned_G_at(_rates.m_n(model, n) - ell) / ell
                gap = abs(emp - ana) / abs(ana) if ana != 0.0 else None
                rows.append((n, x, emp, ana, gap))
    return LinearReport(rows=rows, regime=regime, constants=consts.as_dict())


# ---------------------------------------------------------------------------
# figures (report path only)


def _render_png(draw) -> bytes:
    # Agg + scrubbed metadata keeps renders byte-identical run to run
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig = plt.figure(figsize=(7.0, 4.5), dpi=110)
    try:
        ax = fig.add_subplot(111)
        draw(ax)
        buf = io.BytesIO()
        fig.savefig(buf, format="png", metadata={"Software": None})
        return buf.getvalue()
    finally:
        plt.close(fig)


def render_moderate_figure(report: ModerateReport) -> bytes:
    def draw(ax):
        by_n: dict[int, list] = {}
        for n, ell, _, _, yol in report.rows:
            by_n.setdefault(n, []).append((ell, yol))
        for n in sorted(by_n):
            pts = sorted(by_n[n])
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=f"n = {n}")
        ax.axhline(report.beta, linestyle="--", color="black",
                   label="beta target")
        ax.set_xlabel("depth ell")
        ax.set_ylabel("log(-log P) / ell")
        ax.set_title("moderate-deviation collapse")
        ax.legend(loc="best")

    return _render_png(draw)


def render_linear_figure(report: LinearReport) -> bytes:
    def draw(ax):
        by_n: dict[int, list] = {}
        ana_pts = {}
        for n, x, emp, ana, _ in report.rows:
            by_n.setdefault(n, []).append((x, emp))
            ana_pts[x] = ana
        pts = sorted(ana_pts.items())
        ax.plot([p[0] for p in pts], [p[1] for p in pts], color="black",
                linestyle="--", label="analytic rate")
        for n in sorted(by_n):
            series = sorted(by_n[n])
            ax.plot([p[0] for p in series], [p[1] for p in series],
                    marker="o", linestyle="", label=f"n = {n}")
        xlab = "x" if report.regime == "boettcher" else "depth coefficient"
        ax.set_xlabel(xlab)
        ax.set_ylabel("rate")
        ax.set_title(f"linear-regime rates ({report.regime})")
        ax.legend(loc="best")

    return _render_png(draw)
