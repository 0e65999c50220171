"""Command-line front end.

Every command writes a JSON report ``{schema_version, command, config,
results}`` or a CSV table with a fixed header (see ``CSV_HEADERS``).

Exit codes:

==  ====================================================
0   success
2   an internal consistency check failed
3   the model file could not be parsed
4   the model is signaling
5   the reversal target is infeasible
6   invalid parameters or grid
7   exact oracle infeasible and no Monte Carlo trials
==  ====================================================
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import Infeasible, InvalidConfig, SignedSanovError, TooLarge, ZeroProbability
from .measures import ProbDist, kl_divergence, total_variation_weight
from .rates import (
    BallSpec,
    compare_rates,
    empirical_rate,
    exact_ball_probability,
    ising_baseline,
    mc_ball_probability,
    min_ball_kl,
)
from .reversal import (
    NearUniformConfig,
    ReversalProblem,
    near_uniform_derivative,
    near_uniform_gap,
    min_kl_given_pushforward,
)
from .scenario import (
    bell_fixture,
    canonical_phase_space,
    load_model,
    no_signaling_check,
    realization_residual,
    realize_minimal,
)
from .simulation import context_map, double, make_rng, signed_pushforward

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_PARSE = 3
EXIT_SIGNALING = 4
EXIT_INFEASIBLE = 5
EXIT_INVALID = 6
EXIT_ORACLE = 7

# a hand-picked doubled-space deviation whose (a, b) image is (2/3, 0, 0, 1/3)
BELL_DEVIATION = {"+0": 0.284, "+1": 0.078, "+4": 0.078, "-10": 0.170,
                  "+11": 0.156, "+14": 0.156, "+15": 0.078}
BELL_TARGET = (2 / 3, 0.0, 0.0, 1 / 3)

CSV_HEADERS = {
    "bell-demo": ["Lambda", "roundtrip_max_error", "d_coarse", "d_fine", "reversal",
                  "n", "p_coarse", "p_fine"],
    "realize": ["state", "weight", "Lambda", "residual"],
    "reversal-search": ["realization", "Lambda", "d_coarse", "d_star", "reversal",
                        "constraint_residual", "g_star"],
    "near-uniform": ["epsilon", "gap_direct", "gap_closed_form", "derivative_fd",
                     "derivative_analytic", "derivative_rel_error"],
    "mc-sanov": ["n", "exact_probability", "mc_estimate", "mc_stderr", "empirical_rate",
                 "limit_rate", "rate_gap"],
    "ising": ["g", "d_fine", "d_coarse", "dpi_holds", "strict"],
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, EXIT_INVALID)


def _num(x):
    """JSON-safe float (infinities become strings)."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _floats(text: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(f"cannot parse number list {text!r}: {exc}", EXIT_INVALID)


def _bell_deviation(sim) -> np.ndarray:
    g = np.zeros(2 * sim.m)
    for label, v in BELL_DEVIATION.items():
        g[sim.labels.index(f"{label[0]}w{label[1:]}")] = v
    return g


# -- commands --------------------------------------------------------------

def cmd_bell_demo(args):
    model, lam = bell_fixture()
    space = canonical_phase_space(model.scenario)
    sim = double(lam)
    worst = 0.0
    for context, row in model.rows:
        pushed = signed_pushforward(sim.nu, context_map(space, context)).dist.probs
        worst = max(worst, float(np.abs(pushed - row.probs).max()))
    chi = context_map(space, ("a", "b"))
    g = _bell_deviation(sim)
    f = signed_pushforward(g, chi).dist.probs
    mu = model.row(("a", "b")).probs
    cmp = compare_rates(g, sim.nu, f, mu, args.n)
    Lambda = total_variation_weight(lam)
    results = {
        "Lambda": Lambda,
        "roundtrip_max_error": worst,
        "residual": realization_residual(lam, model),
        "context": ["a", "b"],
        "f": [float(x) for x in f],
        "mu": [float(x) for x in mu],
        "d_coarse": _num(cmp.d_coarse),
        "d_fine": _num(cmp.d_fine),
        "reversal": cmp.reversal,
        "n": args.n,
        "p_coarse": _num(cmp.p_coarse),
        "p_fine": _num(cmp.p_fine),
    }
    rows = [[Lambda, worst, cmp.d_coarse, cmp.d_fine, cmp.reversal, args.n, cmp.p_coarse, cmp.p_fine]]
    ok = worst <= 1e-12 and Lambda == 1.25 and cmp.reversal
    return {"n": args.n}, results, rows, (EXIT_OK if ok else EXIT_CHECK_FAILED)


def _read_model(path):
    try:
        return load_model(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise CliError(f"cannot parse model {path}: {exc}", EXIT_PARSE)


def _require_no_signaling(model):
    try:
        report = no_signaling_check(model)
    except KeyError as exc:
        raise CliError(f"model is incomplete: {exc}", EXIT_PARSE)
    if not report.passed:
        raise CliError(f"model is signaling (marginal gap {report.max_gap:.3g} between "
                       f"{report.worst_pair})", EXIT_SIGNALING)


def cmd_realize(args):
    if not args.model:
        raise CliError("--model is required", EXIT_INVALID)
    model = _read_model(args.model)
    _require_no_signaling(model)
    real = realize_minimal(model)
    Lambda = real.total_weight
    results = {
        "lambda": [float(x) for x in real.lam.weights],
        "labels": list(real.lam.labels),
        "Lambda": Lambda,
        "residual": real.residual,
        "classical": bool(real.lam.is_classical),
    }
    rows = [[lab, w, Lambda, real.residual] for lab, w in zip(real.lam.labels, real.lam.weights)]
    return {"model": args.model}, results, rows, EXIT_OK


def cmd_reversal_search(args):
    if args.model:
        model = _read_model(args.model)
        _require_no_signaling(model)
        fixture = None
    else:
        model, fixture = bell_fixture()
    context = tuple(t.strip() for t in args.context.split(","))
    try:
        model.scenario.check_context(context)
        mu = model.row(context)
    except KeyError as exc:
        raise CliError(f"bad context: {exc}", EXIT_INVALID)
    target = _floats(args.target) if args.target else list(BELL_TARGET)
    try:
        f = ProbDist(target, mu.labels)
    except (ValueError, SignedSanovError) as exc:
        raise CliError(f"bad target: {exc}", EXIT_INVALID)

    choices = []
    if args.realization in ("fixture", "both"):
        if fixture is None:
            if args.realization == "fixture":
                raise CliError("the fixture realization exists only for the built-in Bell model",
                               EXIT_INVALID)
        else:
            choices.append(("fixture", fixture))
    if args.realization in ("minimal", "both"):
        choices.append(("minimal", realize_minimal(model).lam))

    space = canonical_phase_space(model.scenario)
    chi = context_map(space, context)
    d_coarse = kl_divergence(f, mu)
    results, rows = [], []
    for name, lam in choices:
        sim = double(lam)
        try:
            sol = min_kl_given_pushforward(ReversalProblem(sim, chi, f))
        except Infeasible as exc:
            raise CliError(f"target infeasible for {name} realization: {exc}", EXIT_INFEASIBLE)
        reversal = bool(sol.d < d_coarse - 1e-12)
        g_star = {lab: float(v) for lab, v in zip(sim.labels, sol.g.probs) if v > 0}
        results.append({
            "realization": name,
            "Lambda": sim.Lambda,
            "d_coarse": _num(d_coarse),
            "d_star": _num(sol.d),
            "reversal": reversal,
            "constraint_residual": sol.constraint_residual,
            "duality_gap": sol.duality_gap,
            "g_star": g_star,
        })
        rows.append([name, sim.Lambda, d_coarse, sol.d, reversal, sol.constraint_residual,
                     " ".join(f"{k}={v!r}" for k, v in g_star.items())])
    config = {"model": args.model, "context": list(context), "target": target,
              "realization": args.realization}
    return config, results, rows, EXIT_OK


def cmd_near_uniform(args):
    grid = sorted(set(_floats(args.epsilon_grid)))
    if args.m < 2:
        raise CliError("m must be at least 2", EXIT_INVALID)
    if args.target:
        target = _floats(args.target)
    else:
        # default: f_1 at its mean, the rest tilted linearly
        m = args.m
        tilt = np.linspace(1.0, -1.0, m - 1) if m > 2 else np.zeros(1)
        rest = (1 - 1 / m) * (1 + 0.5 * tilt) / (m - 1)
        target = [0.0, 1 / m] + [float(x) for x in rest / rest.sum() * (1 - 1 / m)]
    try:
        base = NearUniformConfig(args.m, 0.0, tuple(target), args.c)
        if not grid or any(2 * args.c * (e + 2 * args.h) >= 1 or e < 0 for e in grid):
            raise InvalidConfig("epsilon grid must be non-empty and inside [0, 1/(2c))")
        results, rows = [], []
        for eps in grid:
            cfg = base.with_epsilon(eps)
            gap = near_uniform_gap(cfg)
            slope = near_uniform_derivative(cfg, args.h)
            results.append({
                "epsilon": eps,
                "gap_direct": gap.direct,
                "gap_closed_form": gap.closed_form,
                "derivative_fd": _num(slope.finite_difference),
                "derivative_analytic": _num(slope.analytic),
                "derivative_rel_error": _num(slope.relative_error),
            })
            rows.append([eps, gap.direct, gap.closed_form, slope.finite_difference,
                         slope.analytic, slope.relative_error])
    except InvalidConfig as exc:
        raise CliError(str(exc), EXIT_INVALID)
    config = {"m": args.m, "c": args.c, "target": target, "epsilon_grid": grid, "h": args.h}
    return config, results, rows, EXIT_OK


def cmd_mc_sanov(args):
    if args.seed is None and args.trials > 0:
        raise CliError("--seed is required when --trials > 0", EXIT_INVALID)
    p = _floats(args.dist)
    center = _floats(args.center)
    n_grid = sorted({int(x) for x in _floats(args.n_grid)})
    try:
        dist = ProbDist(p)
        ball = BallSpec(ProbDist(center), args.delta)
    except (ValueError, SignedSanovError) as exc:
        raise CliError(str(exc), EXIT_INVALID)
    if len(p) != len(center) or not n_grid or min(n_grid) < 1 or args.trials < 0:
        raise CliError("invalid distribution, center or n grid", EXIT_INVALID)
    results, rows = [], []
    for n in n_grid:
        try:
            exact = exact_ball_probability(dist, ball, n)
            limit = min_ball_kl(dist, ball, n)
        except TooLarge:
            exact = limit = None
            if args.trials == 0:
                raise CliError(f"exact oracle infeasible at n={n} and no trials requested", EXIT_ORACLE)
        est = se = None
        if args.trials > 0:
            mc = mc_ball_probability(dist, ball, n, args.trials, args.seed, workers=args.workers)
            est, se = mc.estimate, mc.stderr
        prob = exact if exact is not None else est
        try:
            rate = empirical_rate(dist, ball, n, probability=prob)
        except ZeroProbability:
            rate = float("inf")
        gap = rate - limit if (limit is not None and math.isfinite(rate)) else None
        results.append({"n": n, "exact_probability": exact, "mc_estimate": est, "mc_stderr": se,
                        "empirical_rate": _num(rate),
                        "limit_rate": None if limit is None else _num(limit), "rate_gap": gap})
        rows.append([n, exact, est, se, rate, limit, gap])
    config = {"dist": p, "center": center, "delta": args.delta, "n_grid": n_grid,
              "trials": args.trials, "seed": args.seed}
    return config, results, rows, EXIT_OK


def cmd_ising(args):
    if not args.temperature > 0:
        raise CliError("temperature must be positive", EXIT_INVALID)
    base = ising_baseline(args.J, args.temperature)
    if args.g:
        try:
            gs = [ProbDist(_floats(args.g), base.fine.labels).probs]
        except (ValueError, SignedSanovError) as exc:
            raise CliError(f"bad g: {exc}", EXIT_INVALID)
    else:
        if args.seed is None:
            raise CliError("--seed is required for random deviations", EXIT_INVALID)
        rng = make_rng(args.seed)
        gs = list(rng.dirichlet(np.ones(4), size=max(args.trials, 1)))
    results = {"fine": [float(x) for x in base.fine.probs],
               "coarse": [float(x) for x in base.coarse.probs],
               "Z": base.Z, "deviations": []}
    rows = []
    for g in gs:
        d_fine = kl_divergence(g, base.fine)
        d_coarse = kl_divergence(base.coarse_grain(g), base.coarse)
        holds = bool(d_fine >= d_coarse)
        strict = bool(d_fine > d_coarse + 1e-12)
        results["deviations"].append({"g": [float(x) for x in g], "d_fine": d_fine,
                                      "d_coarse": d_coarse, "dpi_holds": holds, "strict": strict})
        rows.append([" ".join(repr(float(x)) for x in g), d_fine, d_coarse, holds, strict])
    config = {"J": args.J, "temperature": args.temperature, "g": args.g,
              "seed": args.seed, "trials": args.trials}
    code = EXIT_OK if all(r[3] for r in rows) else EXIT_CHECK_FAILED
    return config, results, rows, code


COMMANDS = {
    "bell-demo": cmd_bell_demo,
    "realize": cmd_realize,
    "reversal-search": cmd_reversal_search,
    "near-uniform": cmd_near_uniform,
    "mc-sanov": cmd_mc_sanov,
    "ising": cmd_ising,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signedsanov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", help="output file (default: stdout)")
        return p

    p = common(sub.add_parser("bell-demo", help="reproduce the Bell-model reversal"))
    p.add_argument("--n", type=int, default=100, help="sample size for Sanov probabilities")

    p = common(sub.add_parser("realize", help="minimal signed realization of a model"))
    p.add_argument("--model", help="empirical model JSON")

    p = common(sub.add_parser("reversal-search", help="cheapest simulation deviation for a target"))
    p.add_argument("--model", help="empirical model JSON (default: built-in Bell model)")
    p.add_argument("--context", default="a,b", help="comma-separated measurement per party")
    p.add_argument("--target", help="observable frequencies, comma separated (rationals allowed)")
    p.add_argument("--realization", choices=("fixture", "minimal", "both"), default="both")

    p = common(sub.add_parser("near-uniform", help="rate gap sweep of the near-uniform family"))
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--target", help="m + 1 frequencies with a leading 0")
    p.add_argument("--epsilon-grid", default="0,1e-4,1e-3,1e-2")
    p.add_argument("--h", type=float, default=1e-4, help="finite-difference step")

    p = common(sub.add_parser("mc-sanov", help="exact and Monte Carlo ball probabilities"))
    p.add_argument("--dist", default="0.5,0.5")
    p.add_argument("--center", default="0.7,0.3")
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--n-grid", default="50,100,200,400")
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = common(sub.add_parser("ising", help="classical DPI on the two-spin Ising baseline"))
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--g", help="fine-grained deviation over ++,+-,-+,--")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=1, help="number of random deviations")
    return parser


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def render(command, config, results, rows, fmt) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_HEADERS[command])
        for row in rows:
            writer.writerow([_cell(x) for x in row])
        return buf.getvalue()
    report = {"schema_version": SCHEMA_VERSION, "command": command,
              "config": config, "results": results}
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config, results, rows, code = COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    text = render(args.command, config, results, rows, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
