"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 assumption violation, 3 infeasible
enumeration.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bounds as B
from .core import EdgeProbs, Graph, Labelling, ModelFamily, sample_graph
from .errors import AssumptionViolation, EnumerationInfeasible, SBMError
from .harness import ExperimentConfig, run_experiment
from .inference import confidence_from_credible, enlarge, hpd_credible_set, odds_test
from .metrics import enumerate_space
from .posterior import PRIOR_KINDS, build_prior, class_count_in, exact_posterior, mcmc_posterior

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_INFEASIBLE = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def parse_sizes(text: str) -> list[list[int]]:
    """``"8;4,4"`` -> ``[[8], [4, 4]]``."""
    try:
        return [[int(x) for x in part.split(",")] for part in text.split(";") if part.strip()]
    except ValueError:
        raise _UsageError(f"bad size list {text!r}; expected e.g. '8;4,4'") from None


def parse_ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _family_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--sizes", help="admissible size vectors, e.g. '8;4,4'")
    g.add_argument("--L", type=int, help="windowed family with class counts 1..L")
    g.add_argument("--all", dest="all_ells", metavar="ELLS", help="all partitions with these class counts, e.g. '1,2'")


def _family(args) -> ModelFamily:
    if args.sizes:
        return ModelFamily(args.n, parse_sizes(args.sizes))
    if args.L is not None:
        return ModelFamily.windowed(args.n, args.L)
    return ModelFamily.all_partitions(args.n, parse_ints(args.all_ells))


def _prob_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phase", default="explicit", choices=["dense", "chernoff-hellinger", "kesten-stigum", "explicit"])
    for name in ("p", "q", "a", "b", "c", "d"):
        p.add_argument(f"--{name}", type=float)


def _probs(args) -> EdgeProbs:
    def need(*names):
        missing = [x for x in names if getattr(args, x) is None]
        if missing:
            raise _UsageError(f"phase {args.phase} needs --{' --'.join(missing)}")
    if args.phase == "chernoff-hellinger":
        need("a", "b")
        return EdgeProbs.chernoff_hellinger(args.n, args.a, args.b)
    if args.phase == "kesten-stigum":
        need("c", "d")
        return EdgeProbs.kesten_stigum(args.n, args.c, args.d)
    need("p", "q")
    return EdgeProbs.dense(args.p, args.q) if args.phase == "dense" else EdgeProbs(args.p, args.q)


def _theta0(args, family: ModelFamily) -> Labelling:
    if getattr(args, "theta0", None):
        theta = Labelling.parse(args.theta0)
    else:
        ell0 = getattr(args, "ell0", None) or max(family.ells)
        vecs = family.vectors(ell0)
        if not vecs:
            raise _UsageError(f"class count {ell0} is not in the family")
        theta = Labelling.blocks(vecs[0])
    if theta not in family:
        raise _UsageError(f"theta0 {theta} is not in the family")
    return theta


def _emit(text: str, path: str | None) -> None:
    if path and path != "-":
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_graph(path: str) -> Graph:
    return Graph.from_text(sys.stdin.read()) if path == "-" else Graph.load(path)


def _posterior_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="graph file ('-' for stdin)")
    _family_args(p)
    _prob_args(p)
    p.add_argument("--prior", default="flat-uniform", choices=PRIOR_KINDS[:2])


def _table(args):
    graph = _load_graph(args.graph)
    args.n = graph.n
    family = _family(args)
    return exact_posterior(graph, build_prior(args.prior, family), _probs(args)), family


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.theta:
        theta = Labelling.parse(args.theta)
    elif args.sizes:
        sizes = parse_sizes(args.sizes)
        if len(sizes) != 1:
            raise _UsageError("simulate takes a single size vector")
        theta = Labelling.blocks(sizes[0])
    else:
        raise _UsageError("simulate needs --theta or --sizes")
    args.n = theta.n
    graph = sample_graph(theta, _probs(args), args.seed)
    _emit(graph.to_text(), args.out)
    return EXIT_OK


def cmd_posterior(args) -> int:
    graph = _load_graph(args.graph)
    args.n = graph.n
    family = _family(args)
    prior = build_prior(args.prior, family)
    probs = _probs(args)
    if args.engine == "exact":
        _emit(exact_posterior(graph, prior, probs).to_csv(), args.out)
        return EXIT_OK
    res = mcmc_posterior(graph, prior, probs, args.steps, args.seed)
    rows = sorted(res.frequencies().items(), key=lambda kv: (-kv[1], kv[0].labels))
    lines = ["labelling,frequency"] + [f"{t},{f!r}" for t, f in rows]
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    name = args.name
    if name.startswith("example-"):
        if args.L is None:
            raise _UsageError("phase examples need --L")
        phase = {"dense": "dense", "ch": "chernoff-hellinger", "ks": "kesten-stigum"}.get(name.split("-")[1])
        if phase is None:
            raise _UsageError(f"unknown bound {name!r}")
        if phase == "dense":
            params = {"b": args.bexp} if args.bexp is not None else {"p": args.p, "q": args.q}
        elif phase == "chernoff-hellinger":
            params = {"a": args.a, "b": args.b}
        else:
            params = {"c": args.c, "d": args.d}
        if any(v is None for v in params.values()):
            raise _UsageError(f"{name} needs parameters {sorted(params)}")
        try:
            rep = B.phase_bound(name, args.n, args.L, params, args.r)
        except KeyError:
            raise _UsageError(f"unknown bound {name!r}") from None
    elif name == "thm-odds":
        if args.odds_a is None:
            raise _UsageError("thm-odds needs --odds-a")
        rep = B.odds_test_bound(args.odds_a, args.r, args.odds_b)
    else:
        if args.sizes is None and args.all_ells is None:
            raise _UsageError(f"{name} needs a family (--sizes or --all)")
        family = _family(args)
        args.phase = "explicit"
        probs = _probs(args)
        prior = build_prior(args.prior, family)
        theta0 = _theta0(args, family)
        if name == "prop-model-select":
            if args.ell is None:
                raise _UsageError("prop-model-select needs --ell")
            rep = B.model_selection_bound(family, prior, theta0, args.ell, probs)
        elif name == "prop-ring":
            rep = B.ring_bound(family, prior, theta0, args.k, probs)
        elif name == "cor-point":
            rep = B.point_bound(family, prior, theta0, probs)
        elif name == "prop-postconvset":
            if None in (args.S_card, args.S_mass, args.B_exp):
                raise _UsageError("prop-postconvset needs --S-card, --S-mass and --B-exp")
            rep = B.posterior_set_bound(prior, theta0, args.S_card, args.S_mass, args.B_exp, probs.p, probs.q)
        else:
            raise _UsageError(f"unknown bound {name!r}")
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def cmd_credible(args) -> int:
    table, family = _table(args)
    cs = hpd_credible_set(table, args.alpha)
    members = cs.members if args.k == 0 else enlarge(cs, args.k, family)
    out = {"credible_set": cs.to_dict(), "enlarged_size": len(members), "k": args.k}
    if args.k:
        out["enlarged_members"] = sorted(str(t) for t in members)
    if args.x is not None:
        out["confidence"] = confidence_from_credible(args.alpha, args.x, args.k, len(members)).to_dict()
    _emit(json.dumps(out, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def cmd_test(args) -> int:
    table, _ = _table(args)
    dec = odds_test(table, class_count_in(*parse_ints(args.A)), class_count_in(*parse_ints(args.B)), args.r,
                    a=args.odds_a, b=args.odds_b, second_kind=args.second_kind)
    _emit(json.dumps({**dec.to_dict(), "A": parse_ints(args.A), "B": parse_ints(args.B)}, indent=2,
                     sort_keys=True), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.replicates is not None:
        cfg.replicates = args.replicates
    if args.workers is not None:
        cfg.workers = args.workers
    report = run_experiment(cfg)
    _emit(report.to_json(include_runtime=args.runtime), args.out)
    if args.csv:
        _emit(report.to_csv(), args.csv)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    family = _family(args)
    lines = [str(t) for t in enumerate_space(family, args.ell)]
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbmpost", description="Bayesian inference for the planted multi-section block model.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a graph")
    p.add_argument("--theta", help="true labelling, e.g. '1 1 2 2'")
    p.add_argument("--sizes", help="block labelling with these class sizes, e.g. '4,4'")
    _prob_args(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("posterior", help="posterior table as CSV")
    _posterior_args(p)
    p.add_argument("--engine", choices=["exact", "mcmc"], default="exact")
    p.add_argument("--steps", type=int, default=100000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("bounds", help="evaluate a bound as JSON")
    p.add_argument("--name", required=True)
    p.add_argument("--n", type=int)
    _family_args(p, required=False)
    _prob_args(p)
    p.add_argument("--bexp", type=float, help="dense phase: -log rho given directly")
    p.add_argument("--prior", default="flat-uniform", choices=PRIOR_KINDS[:2])
    p.add_argument("--theta0")
    p.add_argument("--ell0", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--odds-a", type=float)
    p.add_argument("--odds-b", type=float)
    p.add_argument("--S-card", dest="S_card", type=int)
    p.add_argument("--S-mass", dest="S_mass", type=float)
    p.add_argument("--B-exp", dest="B_exp", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("credible", help="HPD credible set and confidence statement")
    _posterior_args(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--x", type=float, help="contraction input x_n")
    p.add_argument("--out")
    p.set_defaults(func=cmd_credible)

    p = sub.add_parser("test", help="posterior-odds test between class counts")
    _posterior_args(p)
    p.add_argument("--A", required=True, help="null class counts, e.g. '2'")
    p.add_argument("--B", required=True, help="alternative class counts, e.g. '1'")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--odds-a", type=float)
    p.add_argument("--odds-b", type=float)
    p.add_argument("--second-kind", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("verify", help="run a Monte Carlo experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--runtime", action="store_true", help="include wall time (breaks byte reproducibility)")
    p.add_argument("--csv", help="also write the rows as CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("enumerate", help="list a family's labellings")
    p.add_argument("--n", type=int, required=True)
    _family_args(p)
    p.add_argument("--ell", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"sbmpost: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolation as exc:
        print(f"sbmpost: assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except EnumerationInfeasible as exc:
        print(f"sbmpost: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError, SBMError) as exc:
        print(f"sbmpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
