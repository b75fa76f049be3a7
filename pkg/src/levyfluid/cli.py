"""Command line entry point: JSON network in, CSV or JSON report out.

Exit codes: 0 success, 1 a Monte Carlo comparison failed, 2 usage error,
3 malformed network file, 4 query dimension mismatch, 5 unmet
precondition (unstable network, missing capability), 6 too much censoring.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys

import numpy as np

from . import montecarlo as mc
from .excursions import (
    ExcursionModel,
    recurrence_transform,
    simulate_excursions,
    simulate_recurrence,
    undershoot_transform,
)
from .levy import DEFAULT_DELTA, sample_path
from .model import PreconditionError, SpecError, TreeNetworkSpec, validate_network
from .skorokhod import reflect_explicit
from .transforms import idle_vector, priority_WE, quasi_product_XG, tandem_WB

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG, EXIT_DIM, EXIT_PRECOND, EXIT_CENSOR = range(7)


class DimensionError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of decimals: {text!r}")
    if v.size == 0:
        raise argparse.ArgumentTypeError("empty vector")
    return v


def _load_network(source: str) -> TreeNetworkSpec:
    text = source if source.lstrip().startswith("{") else open(source).read()
    return TreeNetworkSpec.from_json(text)


def _dim(spec, name, v):
    if v is None:
        return np.zeros(spec.n)
    if v.size != spec.n:
        raise DimensionError(f"--{name} has {v.size} entries, network has {spec.n} stations")
    return v


def _fmt(v) -> str:
    return " ".join(repr(float(x)) for x in np.atleast_1d(v))


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _zip_queries(spec, args, names):
    """Pair repeated query flags; a missing flag means all zeros."""
    lists = {nm: getattr(args, nm) or [] for nm in names}
    m = max([len(v) for v in lists.values()] + [1])
    for nm, v in lists.items():
        if len(v) not in (0, 1, m):
            raise DimensionError(f"--{nm} given {len(v)} times, expected 1 or {m}")
    out = []
    for q in range(m):
        out.append({nm: _dim(spec, nm, (v[q] if len(v) == m else v[0]) if v else None) for nm, v in lists.items()})
    return out


# ------------------------------------------------------------------ commands

def cmd_validate(args):
    spec = _load_network(args.network)
    rep = validate_network(spec)
    _emit(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args):
    spec = _load_network(args.network)
    if args.paths:
        s = mc.estimate_stationary(spec, args.paths, args.seed, delta=args.delta)
        n = spec.n
        head = ["path"] + [f"{f}_{j + 1}" for f in ("W", "B", "I", "Wt", "Bt", "It", "E") for j in range(n)]
        rows = [head]
        block = np.hstack([s.W, s.B, s.I, s.Wt, s.Bt, s.It, s.E])
        rows += [[p] + [repr(float(x)) for x in block[p]] for p in range(s.n_paths)]
        _emit(_csv(rows), args.out)
        return EXIT_OK
    rep = validate_network(spec)
    if not rep.accepted:
        raise PreconditionError(f"network rejected: {rep.violated}")
    path = sample_path(spec, args.horizon, args.seed, args.delta)
    res = reflect_explicit(spec, path)
    buf = io.StringIO()
    res.to_csv(buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _analytic(spec, kind, q):
    if kind == "wb":
        return tandem_WB(spec, q["omega"], q["beta"]), "tandem W,B (ratio form, cross-checked)"
    if kind == "xg":
        return quasi_product_XG(spec, q["alpha"], q["beta"]), "sup X, argmax G quasi-product"
    if kind == "idle":
        return idle_vector(spec, q["gamma"]), "idle ages"
    if kind == "priority":
        return priority_WE(spec, q["omega"], q["beta"]), "priority W,E"
    raise ValueError(kind)


def cmd_transform(args):
    spec = _load_network(args.network)
    rows = [["kind", "alpha", "beta", "omega", "gamma", "value", "form"]]
    for q in _zip_queries(spec, args, ("alpha", "beta", "omega", "gamma")):
        val, form = _analytic(spec, args.kind, q)
        rows.append([args.kind, _fmt(q["alpha"]), _fmt(q["beta"]), _fmt(q["omega"]), _fmt(q["gamma"]), repr(val), form])
    _emit(_csv(rows), args.out)
    return EXIT_OK


def _default_grid(spec, kind):
    vals = (0.0, 0.5, 1.0)
    n = spec.n
    qs = []
    if kind in ("wb", "priority"):
        for p in itertools.product(vals, repeat=2 * n):
            if any(p):
                qs.append({"omega": np.array(p[:n]), "beta": np.array(p[n:])})
    elif kind == "idle":
        for p in itertools.product(vals[1:], repeat=n):
            qs.append({"gamma": np.array(p)})
    elif kind == "xg":
        for p in itertools.product(vals, repeat=2 * n):
            if any(p):
                qs.append({"alpha": np.array(p[:n]), "beta": np.array(p[n:])})
    return qs


_FIELDS = {"wb": {"omega": "W", "beta": "B"}, "priority": {"omega": "W", "beta": "E"},
           "xg": {"alpha": "g", "beta": "xbar"}, "idle": {"gamma": "I"}}


def _mc_rows(spec, args, kind):
    if args.seed is None:
        raise _UsageError("--seed is required for stochastic commands")
    names = tuple(_FIELDS[kind])
    given = any(getattr(args, nm, None) for nm in names)
    queries = _zip_queries(spec, args, names) if given else _default_grid(spec, kind)
    samples = mc.estimate_stationary(spec, args.paths, args.seed, delta=args.delta, workers=args.workers)
    verdicts = []
    for q in queries:
        val, _ = _analytic(spec, kind, {"alpha": None, "beta": None, "omega": None, "gamma": None, **q})
        est = mc.estimate_transform(samples, {_FIELDS[kind][nm]: q[nm] for nm in names})
        label = " ".join(f"{nm}=({','.join(f'{x:g}' for x in q[nm])})" for nm in names)
        verdicts.append(mc.compare(val, est, label))
    buf = io.StringIO()
    mc.write_report(buf, verdicts)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if mc.all_pass(verdicts) else EXIT_FAIL


class _UsageError(Exception):
    pass


def cmd_mc_compare(args):
    return _mc_rows(_load_network(args.network), args, args.kind)


def cmd_priority(args):
    return _mc_rows(_load_network(args.network), args, "priority")


def cmd_excursion_check(args):
    if args.seed is None:
        raise _UsageError("--seed is required for stochastic commands")
    spec = _load_network(args.network)
    root = spec.inputs[0]
    if not root.has_jumps:
        raise PreconditionError("the root input must be compound Poisson")
    c = spec.r[0] - root.drift
    model = ExcursionModel(c, root.intensity, root.jump_law)
    ex = simulate_excursions(model, args.paths, args.seed)
    rec = simulate_recurrence(root.intensity, root.jump_law, args.paths, args.seed + 1)
    verdicts = []
    for beta, gamma, kappa in itertools.product(args.beta_grid, args.gamma_grid, args.kappa_grid):
        a = undershoot_transform(model, beta, gamma, kappa)
        b = undershoot_transform(model, beta, gamma, kappa, form="length")
        if abs(a - b) > 1e-10:
            raise ArithmeticError(f"undershoot forms disagree: {a!r} vs {b!r}")
        vals = np.exp(-beta * ex["under"] - gamma * ex["tau"] - kappa * ex["mark"])
        verdicts.append(mc.compare(a, mc.estimate_mean(vals), f"undershoot beta={beta:g} gamma={gamma:g} kappa={kappa:g}"))
    for s, beta, gamma in itertools.product((0.0, 0.5, 1.0), args.beta_grid, args.gamma_grid):
        a = recurrence_transform(root.intensity, root.jump_law, s, beta, gamma)
        with np.errstate(divide="ignore"):
            sN = np.where(rec["N"] == 0, 1.0, s ** rec["N"].astype(float))
        vals = sN * np.exp(-beta * rec["A"] - gamma * rec["zeta"])
        verdicts.append(mc.compare(a, mc.estimate_mean(vals), f"recurrence s={s:g} beta={beta:g} gamma={gamma:g}"))
    buf = io.StringIO()
    mc.write_report(buf, verdicts)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if mc.all_pass(verdicts) else EXIT_FAIL


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="levyfluid", description="Stationary analysis of Levy-driven tree fluid networks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, stochastic=False):
        sp.add_argument("--network", required=True, help="network JSON file or inline JSON")
        sp.add_argument("--out", help="output file (default stdout)")
        if stochastic:
            sp.add_argument("--seed", type=int, help="master seed (required)")
            sp.add_argument("--paths", type=int, default=100_000)
            sp.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="grid step for Brownian inputs")
            sp.add_argument("--workers", type=int, default=1)

    def queries(sp, names):
        for nm in names:
            sp.add_argument(f"--{nm}", type=_vector, action="append", help=f"{nm} vector, comma separated (repeatable)")

    sp = sub.add_parser("validate", help="check conditions N1-N3, T1-T8")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="trajectory CSV, or stationary sample CSV with --paths")
    common(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--horizon", type=float, default=50.0)
    sp.add_argument("--paths", type=int, default=0)
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("transform", help="analytic transform values")
    common(sp)
    sp.add_argument("--kind", choices=["wb", "xg", "idle", "priority"], default="wb")
    queries(sp, ("alpha", "beta", "omega", "gamma"))
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("mc-compare", help="analytic vs Monte Carlo with verdicts")
    common(sp, stochastic=True)
    sp.add_argument("--kind", choices=["wb", "xg", "idle"], default="wb")
    queries(sp, ("alpha", "beta", "omega", "gamma"))
    sp.set_defaults(func=cmd_mc_compare)

    sp = sub.add_parser("excursion-check", help="single excursion and recurrence identities vs simulation")
    common(sp, stochastic=True)
    sp.add_argument("--beta-grid", type=_vector, default=np.array([0.0, 0.5, 1.0]))
    sp.add_argument("--gamma-grid", type=_vector, default=np.array([0.0, 0.5, 1.0]))
    sp.add_argument("--kappa-grid", type=_vector, default=np.array([0.0, 1.0]))
    sp.set_defaults(func=cmd_excursion_check)

    sp = sub.add_parser("priority", help="priority network transform vs Monte Carlo")
    common(sp, stochastic=True)
    queries(sp, ("omega", "beta"))
    sp.set_defaults(func=cmd_priority)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"levyfluid: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SpecError, json.JSONDecodeError, OSError) as e:
        print(f"levyfluid: malformed network: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as e:
        print(f"levyfluid: dimension mismatch: {e}", file=sys.stderr)
        return EXIT_DIM
    except PreconditionError as e:
        print(f"levyfluid: precondition failed: {e}", file=sys.stderr)
        return EXIT_PRECOND
    except mc.CensoringError as e:
        print(f"levyfluid: {e}", file=sys.stderr)
        return EXIT_CENSOR


if __name__ == "__main__":
    sys.exit(main())
