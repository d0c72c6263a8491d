"""Batch command line front-end.

One command per process; every run loads a JSON model config, computes, and
writes artifacts into --out. Artifacts are pure functions of (config bytes,
flags, seed): floats carry 17 significant digits, files land via temp +
rename, and anything time-dependent lives only in the run_meta.json sidecar,
so re-running a command yields byte-identical artifacts. Validation problems
exit 2 with a one-line JSON diagnostic on stderr; blown resource budgets
exit 3.

Delimited artifacts (CSV, JSON lines) each get a sibling
``<name>.constants.json`` carrying the resolved model constants, so
downstream analysis never re-derives them; JSON artifacts embed the same
block under a "constants" key.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import oracle as _oracle
from . import rates as _rates
from . import report as _report
from . import simulate as _sim
from .errors import (
    DegenerateBoundary,
    NoRoot,
    OutOfRange,
    ResourceError,
    ValidationError,
)
from .model import LatticePMF, Model, load_model_file
from .serial import atomic_write_bytes, atomic_write_text, fmt17, json_dumps

__all__ = ["entry", "main"]


# ---------------------------------------------------------------------------
# small parsing helpers


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ValidationError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ValidationError(f"{flag} list is empty")
    return vals


def _parse_ints(text: str, flag: str) -> list[int]:
    vals = []
    for v in text.split(","):
        if v == "":
            continue
        try:
            vals.append(int(v))
        except ValueError:
            raise ValidationError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not vals:
        raise ValidationError(f"{flag} list is empty")
    return vals


def _check_seed(seed: int) -> int:
    if not 0 <= seed < 2**64:
        raise ValidationError(f"--seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _write_text(out_dir: str, name: str, text: str, artifacts: list[str]) -> None:
    atomic_write_text(os.path.join(out_dir, name), text)
    artifacts.append(name)


def _write_constants_sidecar(out_dir: str, stem: str, consts: dict, extra: dict,
                             artifacts: list[str]) -> None:
    payload = {"constants": consts}
    payload.update(extra)
    _write_text(out_dir, f"{stem}.constants.json", json_dumps(payload) + "\n", artifacts)


def _records_lines(records) -> str:
    # wall clock is run-dependent; it is nulled here and reported in run_meta
    lines = []
    for rec in records:
        d = rec.as_dict()
        d["wall_time_ms"] = None
        lines.append(json_dumps(d, indent=None))
    return "\n".join(lines) + "\n"


def _resolve_lattice(model: Model, span: float, pcut: float):
    """Model on a lattice: identity for lattice steps, discretized twin else."""
    if isinstance(model.step, LatticePMF):
        return model, None
    tw = _oracle.discretize_step(model.step, span, pcut)
    twin = Model.build(model.off, tw.step)
    meta = {
        "span": span,
        "p_cut": pcut,
        "lost_tail_mass": tw.lost_tail_mass,
        "mean_correction": tw.mean_correction,
        "atoms": int(len(tw.step.offsets)),
    }
    return twin, meta


def _grid_for(model: Model, n: int) -> _oracle.LogCdfGrid:
    """Plain recursion for doubling laws, conditioned sweep for Schroeder ones."""
    p01 = model.off.pmf.get(0, 0.0) + model.off.pmf.get(1, 0.0)
    if 0.0 < p01 < 1.0:
        return _oracle.conditioned_cdf(model, n)
    return _oracle.max_cdf_recursion(model, n)


# ---------------------------------------------------------------------------
# command handlers; each returns (artifact names, extra run_meta entries)


def _cmd_rates(args) -> tuple[list[str], dict]:
    model = load_model_file(args.model)
    consts = model.consts
    xs = _parse_floats(args.x, "--x") if args.x else None
    payload: dict = {
        "constants": consts.as_dict(),
        "x_star": consts.x_star,
        "theta_star": consts.theta_star,
        "log_m": consts.log_m,
    }
    if model.off.b >= 2 and math.isfinite(consts.L):
        payload["beta"] = _rates.beta_moderate(model)
        grid = xs if xs is not None else [
            -consts.L + k * (consts.x_star + consts.L) / 8.0 for k in range(9)
        ]
        payload["rate_bounded"] = {
            "x": list(grid),
            "rate": [_rates.rate_bounded(model, x) for x in grid],
        }
    elif xs is not None and model.off.b >= 2:
        raise OutOfRange(
            "--x rate grid needs a step bounded below; this step is unbounded")
    p01 = model.off.pmf.get(0, 0.0) + model.off.pmf.get(1, 0.0)
    if 0.0 < p01 < 1.0:
        block: dict = {"gamma": consts.gamma, "q": consts.q}
        try:
            block["t_star"] = _rates.schroder_t_star(model).value
        except (NoRoot, DegenerateBoundary) as exc:
            # surfaced, not masked: the rest of the report stays useful
            block["t_star_error"] = type(exc).__name__
        if xs is not None:
            block["H"] = {
                "ell_star": list(xs),
                "rate": [_rates.schroder_H(model, x).value for x in xs],
            }
        payload["schroder"] = block
    artifacts: list[str] = []
    _write_text(args.out, "rates.json", json_dumps(payload) + "\n", artifacts)
    return artifacts, {}


def _cmd_oracle_cdf(args) -> tuple[list[str], dict]:
    model, twin_meta = _resolve_lattice(load_model_file(args.model), args.span, args.pcut)
    ns = sorted(set(_parse_ints(args.n, "--n")))
    grids = [_grid_for(model, n) for n in ns]
    artifacts: list[str] = []
    _write_text(args.out, "log_cdf.csv",
                "\n".join(_oracle.log_cdf_csv_lines(grids)) + "\n", artifacts)
    extra = {"n": ns}
    if twin_meta:
        extra["discretization"] = twin_meta
    _write_constants_sidecar(args.out, "log_cdf", model.consts.as_dict(), extra, artifacts)
    return artifacts, {}


def _cmd_gw_pmf(args) -> tuple[list[str], dict]:
    model = load_model_file(args.model)
    ns = sorted(set(_parse_ints(args.n, "--n")))
    if args.trunc < 0:
        raise OutOfRange(f"--trunc must be >= 0, got {args.trunc}")
    lines = ["n,k,probability,log_probability"]
    tails: dict[str, float] = {}
    for n in ns:
        series = _oracle.gw_pmf(model.off, n, args.trunc)
        for k, p in enumerate(series.coefficients):
            p = float(p)
            lp = fmt17(math.log(p)) if p > 0.0 else ""
            lines.append(f"{n},{k},{fmt17(p)},{lp}")
        tails[str(n)] = series.tail_mass
    artifacts: list[str] = []
    _write_text(args.out, "gw_pmf.csv", "\n".join(lines) + "\n", artifacts)
    _write_constants_sidecar(args.out, "gw_pmf", model.consts.as_dict(),
                             {"trunc": args.trunc, "tail_mass_by_n": tails}, artifacts)
    return artifacts, {}


def _cmd_simulate(args) -> tuple[list[str], dict]:
    model = load_model_file(args.model)
    ns = sorted(set(_parse_ints(args.n, "--n")))
    seed = _check_seed(args.seed)
    if args.replicas < 1:
        raise OutOfRange(f"--replicas must be >= 1, got {args.replicas}")
    lines = ["n,replica,max_position,derivative,population"]
    records = []
    walls: dict[str, float] = {}
    for n in ns:
        t0 = time.perf_counter()
        res = _sim.simulate_forward(model, n, args.replicas, seed, population_cap=args.cap)
        wall = (time.perf_counter() - t0) * 1000.0
        for r in range(args.replicas):
            lines.append(f"{n},{r},{fmt17(res.max_position[r])},"
                         f"{fmt17(res.derivative[r])},{int(res.population[r])}")
        mean = float(np.mean(res.derivative))
        se = (float(np.std(res.derivative, ddof=1)) / math.sqrt(args.replicas)
              if args.replicas > 1 else math.nan)
        rec = _sim.EstimateRecord(
            name=f"forward:D-mean:n={n}", point_estimate=mean, standard_error=se,
            replicas=args.replicas, seed=seed, wall_time_ms=wall, method="forward-mc")
        records.append(rec)
        walls[rec.name] = wall
    if args.d_tail:
        rec = _sim.d_tail_slope(model, args.proxy_n, args.replicas, seed)
        records.append(rec)
        walls[rec.name] = rec.wall_time_ms
    artifacts: list[str] = []
    _write_text(args.out, "samples.csv", "\n".join(lines) + "\n", artifacts)
    _write_constants_sidecar(args.out, "samples", model.consts.as_dict(),
                             {"replicas": args.replicas, "seed": seed, "n": ns}, artifacts)
    _write_text(args.out, "records.jsonl", _records_lines(records), artifacts)
    _write_constants_sidecar(args.out, "records", model.consts.as_dict(), {}, artifacts)
    return artifacts, {"record_wall_ms": walls}


def _default_schedule_kind(model: Model) -> str:
    kind = getattr(model.step, "kind", "lattice")
    if kind in ("weibull", "gumbel"):
        return kind
    return "constant"


def _build_schedule(kind: str, model: Model, args, target) -> _sim.StrategySchedule:
    if kind == "constant":
        L = model.consts.L
        if not math.isfinite(L):
            raise OutOfRange(
                "constant schedules force displacement L - eta; this step is "
                "unbounded below, use --schedule weibull or gumbel")
        if not 0.0 <= args.eta < L:
            raise OutOfRange(f"--eta must lie in [0, L) with L = {L:g}, got {args.eta!r}")
        if args.t < 1:
            raise OutOfRange(f"--t must be >= 1, got {args.t}")
        return _sim.constant_schedule(args.t, L - args.eta)
    if isinstance(target, _sim.LinearTarget):
        raise ValidationError(
            f"{kind} ladders scale with a depth ell; pair them with --ell "
            f"moderate targets, not --x")
    alpha = args.alpha
    if alpha is None:
        alpha = getattr(model.step, "alpha", None)
    if alpha is None:
        raise ValidationError(
            f"{kind} schedule on a lattice model needs an explicit --alpha")
    b = float(model.off.b)
    if kind == "weibull":
        return _sim.weibull_schedule(alpha, b, target.ell)
    return _sim.gumbel_schedule(alpha, b, target.ell)


def _cmd_strategy_bound(args) -> tuple[list[str], dict]:
    model = load_model_file(args.model)
    ns = sorted(set(_parse_ints(args.n, "--n")))
    seed = _check_seed(args.seed)
    if (args.x is None) == (args.ell is None):
        raise ValidationError(
            "give exactly one target family: --x (linear) or --ell (depth schedule)")
    if args.x is not None:
        pairs = [(n, _sim.LinearTarget(x))
                 for n in ns for x in _parse_floats(args.x, "--x")]
    else:
        sched = _report.parse_ell_schedule(args.ell)
        pairs = [(n, _sim.ModerateTarget(ell)) for n, ell in sched.pairs(ns)]
    kind = args.schedule or _default_schedule_kind(model)

    twin_meta = None
    if args.tail == "mc":
        tail = "mc"
    elif isinstance(model.step, LatticePMF):
        tail = "oracle"
    else:
        twin, twin_meta = _resolve_lattice(model, args.span, args.pcut)
        tail = _sim.oracle_tail(twin)

    lines = ["n,target,value,schedule,t,sum_a,log_cost,log_tail,"
             "shifted_target,tail_source,bound,standard_error"]
    records = []
    walls: dict[str, float] = {}
    for n, target in pairs:
        schedule = _build_schedule(kind, model, args, target)
        rec = _sim.strategy_lower_bound(
            model, n, target, schedule, tail,
            replicas=args.replicas, seed=seed, population_cap=args.cap)
        d = rec.detail or {}
        tkind = "linear" if isinstance(target, _sim.LinearTarget) else "moderate"
        tval = target.x if tkind == "linear" else target.ell
        lines.append(
            f"{n},{tkind},{fmt17(tval)},{schedule.kind},{d['t']},"
            f"{fmt17(d['sum_a'])},{fmt17(d['log_cost'])},{fmt17(d['log_tail'])},"
            f"{fmt17(d['shifted_target'])},{d['tail_source']},"
            f"{fmt17(rec.point_estimate)},{fmt17(rec.standard_error)}")
        records.append(rec)
        walls[rec.name] = rec.wall_time_ms
    artifacts: list[str] = []
    _write_text(args.out, "strategy_bounds.csv", "\n".join(lines) + "\n", artifacts)
    extra: dict = {"seed": seed, "schedule_kind": kind}
    if twin_meta:
        extra["discretization"] = twin_meta
    _write_constants_sidecar(args.out, "strategy_bounds", model.consts.as_dict(),
                             extra, artifacts)
    _write_text(args.out, "records.jsonl", _records_lines(records), artifacts)
    _write_constants_sidecar(args.out, "records", model.consts.as_dict(), {}, artifacts)
    return artifacts, {"record_wall_ms": walls}


def _cmd_smallball(args) -> tuple[list[str], dict]:
    model = load_model_file(args.model)
    eps = _parse_floats(args.eps, "--eps")
    lines = ["epsilon,delta,t,variant,bound,normalized,analytic_target"]
    records = []
    walls: dict[str, float] = {}
    alpha = getattr(model.step, "alpha", None)
    lam = getattr(model.step, "lam", None)
    for e in eps:
        rec = _sim.smallball_strategy_bound(model, e, args.delta)
        d = rec.detail or {}
        norm = tgt = ""
        if (getattr(model.step, "kind", "") == "weibull" and alpha is not None
                and alpha > 1.0 and 0.0 < e < 1.0):
            nle = -math.log(e)
            norm = fmt17(rec.point_estimate / nle**alpha)
            tgt = fmt17(-_rates.smallball_weibull(
                alpha, lam, float(model.off.b), model.consts.theta_star))
        lines.append(f"{fmt17(e)},{fmt17(args.delta)},{d['t']},{d['variant']},"
                     f"{fmt17(rec.point_estimate)},{norm},{tgt}")
        records.append(rec)
        walls[rec.name] = rec.wall_time_ms
    artifacts: list[str] = []
    _write_text(args.out, "smallball.csv", "\n".join(lines) + "\n", artifacts)
    _write_constants_sidecar(args.out, "smallball", model.consts.as_dict(),
                             {"delta": args.delta}, artifacts)
    _write_text(args.out, "records.jsonl", _records_lines(records), artifacts)
    _write_constants_sidecar(args.out, "records", model.consts.as_dict(), {}, artifacts)
    return artifacts, {"record_wall_ms": walls}


def _cmd_report(args) -> tuple[list[str], dict]:
    model, twin_meta = _resolve_lattice(load_model_file(args.model), args.span, args.pcut)
    ns = _parse_ints(args.n, "--n")
    artifacts: list[str] = []
    extra: dict = {}
    if twin_meta:
        extra["discretization"] = twin_meta
    if args.mode == "moderate":
        if args.ell is None:
            raise ValidationError("report moderate needs --ell")
        sched = _report.parse_ell_schedule(args.ell)
        rep = _report.build_moderate_report(model, ns, sched)
        _write_text(args.out, "moderate.csv", "\n".join(rep.csv_lines()) + "\n", artifacts)
        _write_text(args.out, "moderate_fit.csv",
                    "\n".join(rep.fit_csv_lines()) + "\n", artifacts)
        png = _report.render_moderate_figure(rep)
        atomic_write_bytes(os.path.join(args.out, "moderate.png"), png)
        artifacts.append("moderate.png")
        extra["schedule"] = sched.text
        _write_constants_sidecar(args.out, "moderate", rep.constants, extra, artifacts)
    else:
        if args.x is None:
            raise ValidationError("report linear needs --x")
        xs = _parse_floats(args.x, "--x")
        rep = _report.build_linear_report(model, ns, xs)
        _write_text(args.out, "linear.csv", "\n".join(rep.csv_lines()) + "\n", artifacts)
        png = _report.render_linear_figure(rep)
        atomic_write_bytes(os.path.join(args.out, "linear.png"), png)
        artifacts.append("linear.png")
        extra["regime"] = rep.regime
        _write_constants_sidecar(args.out, "linear", rep.constants, extra, artifacts)
    return artifacts, {}


# ---------------------------------------------------------------------------
# parser and entry point


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="brwdev",
        description="Deviation rates, exact maximum-law recursions, and seeded "
                    "Monte Carlo for branching random walks.")
    sub = top.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="JSON model config path")
    common.add_argument("--out", required=True, help="output directory")

    disc = argparse.ArgumentParser(add_help=False)
    disc.add_argument("--span", type=float, default=0.05,
                      help="lattice span for discretizing parametric steps")
    disc.add_argument("--pcut", type=float, default=1e-9,
                      help="two-sided tail mass folded into the edge atoms")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    mc.add_argument("--replicas", type=int, default=10**4)
    mc.add_argument("--cap", type=int, default=_sim.DEFAULT_CAP,
                    help="population cap per replica")

    p = sub.add_parser("rates", parents=[common],
                       help="derived constants and analytic rate grids (JSON)")
    p.add_argument("--x", help="comma-separated x grid (use --x=-0.5,0,0.4)")
    p.set_defaults(handler=_cmd_rates)

    p = sub.add_parser("oracle-cdf", parents=[common, disc],
                       help="exact -log P(M_n <= x) grids (CSV)")
    p.add_argument("--n", required=True, help="comma-separated generation counts")
    p.set_defaults(handler=_cmd_oracle_cdf)

    p = sub.add_parser("gw-pmf", parents=[common],
                       help="population-size pmf P(Z_n = k) up to a truncation")
    p.add_argument("--n", required=True)
    p.add_argument("--trunc", type=int, default=64)
    p.set_defaults(handler=_cmd_gw_pmf)

    p = sub.add_parser("simulate", parents=[common, mc],
                       help="exact forward Monte Carlo samples of (M_n, D_n, Z_n)")
    p.add_argument("--n", required=True)
    p.add_argument("--d-tail", action="store_true", dest="d_tail",
                   help="also fit the derivative-martingale tail slope")
    p.add_argument("--proxy-n", type=int, default=20, dest="proxy_n",
                   help="generation count standing in for the martingale limit")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("strategy-bound", parents=[common, mc, disc],
                       help="analytic lower bounds from forced-prefix strategies")
    p.add_argument("--n", required=True)
    p.add_argument("--x", help="linear targets M_n <= x n (use --x=-0.5,0)")
    p.add_argument("--ell", help="depth schedule, e.g. 0.5*n or list:20,40,80")
    p.add_argument("--schedule", choices=["constant", "weibull", "gumbel"],
                   help="ladder family; default matches the step law")
    p.add_argument("--alpha", type=float, help="ladder tail exponent override")
    p.add_argument("--t", type=int, default=1, help="constant-schedule prefix depth")
    p.add_argument("--eta", type=float, default=0.0,
                   help="constant-schedule displacement is L - eta")
    p.add_argument("--tail", choices=["oracle", "mc"], default="oracle",
                   help="continuation estimator for the free subtrees")
    p.set_defaults(handler=_cmd_strategy_bound)

    p = sub.add_parser("smallball", parents=[common],
                       help="lower bounds on P(D < epsilon) for the limit martingale")
    p.add_argument("--eps", required=True, help="comma-separated epsilon list")
    p.add_argument("--delta", type=float, default=0.1, help="slack parameter")
    p.set_defaults(handler=_cmd_smallball)

    p = sub.add_parser("report", parents=[common, disc],
                       help="convergence tables plus rendered figures")
    p.add_argument("mode", choices=["moderate", "linear"])
    p.add_argument("--n", required=True)
    p.add_argument("--ell", help="depth schedule for the moderate report")
    p.add_argument("--x", help="x grid for the linear report (use --x=-0.5,0)")
    p.set_defaults(handler=_cmd_report)

    return top


def _diagnostic(exc: BaseException, code: int) -> None:
    sys.stderr.write(json_dumps(
        {"error": type(exc).__name__, "message": str(exc), "exit_code": code},
        indent=None) + "\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.time()
    t0 = time.perf_counter()
    try:
        artifacts, extra_meta = args.handler(args)
    except ValidationError as exc:
        _diagnostic(exc, 2)
        return 2
    except ResourceError as exc:
        _diagnostic(exc, 3)
        return 3
    except OSError as exc:
        _diagnostic(exc, 2)
        return 2
    meta = {
        "command": args.command,
        "argv": list(sys.argv[1:]) if argv is None else list(argv),
        "package_version": _package_version(),
        "started_unix": started,
        "wall_ms": (time.perf_counter() - t0) * 1000.0,
        "artifacts": artifacts,
    }
    meta.update(extra_meta)
    atomic_write_text(os.path.join(args.out, "run_meta.json"), json_dumps(meta) + "\n")
    return 0


def _package_version() -> str:
    from . import __version__

    return __version__


def entry(argv=None) -> int:
    """Console-script entry point."""
    return main(argv)
