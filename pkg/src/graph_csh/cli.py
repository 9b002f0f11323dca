"""``graph-csh``: bounds, solve, degree, verify and bracket from the command line.

Exit codes: 0 success, 1 hypothesis violation, 2 solver non-convergence
(or a supplied solution that fails verification), 3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import _kernels
from .degree import NonRegularError, global_degree
from .estimates import HypothesisError, ProblemData, check_bound, compute_bounds
from .graph import GraphError
from .io import ParseError, dumps_csv, dumps_json, parse_function, parse_graph, trace_csv
from .solvers import SolverConfig, SolverError, construct_bracket, csh_residual, solve_csh

EXIT_OK = 0
EXIT_HYPOTHESIS = 1
EXIT_NONCONVERGENCE = 2
EXIT_IO = 3

SEED_ENV = "GRAPH_CSH_SEED"
COMMANDS = ("bounds", "solve", "degree", "verify", "bracket")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with non-convergence
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _exponent(text):
    v = float(text)
    if not (np.isfinite(v) and v > 1.0):
        raise argparse.ArgumentTypeError("p must be > 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--graph", required=True, help="graph file: header 'n m', then m lines 'i j'")
    common.add_argument("--lambda", dest="lam", type=float, required=True, help="coupling lambda (nonzero)")
    common.add_argument("--f", dest="f_spec", required=True,
                        help="source f: const:c, a number, a JSON array, or a file")
    common.add_argument("--p", type=_exponent, default=2.0, help="exponent p > 1 (default 2)")
    common.add_argument("--epsilon", type=float, default=None, help="override eps (default eps0/2)")
    common.add_argument("--residual-tol", type=float, default=None)
    common.add_argument("--max-outer-iters", type=_positive_int, default=None)
    common.add_argument("--max-inner-iters", type=_positive_int, default=None)
    common.add_argument("--inner-tol", type=float, default=None)
    common.add_argument("--line-search-shrink", type=float, default=None)
    common.add_argument("--multistart-count", type=_positive_int, default=None)
    common.add_argument("--homotopy-steps", type=_positive_int, default=None)
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed ({SEED_ENV} takes precedence)")
    common.add_argument("--output", default=None, help="write the result here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--explore", action="store_true",
                        help="accept data violating lambda*sum(f) < 0; solvers still refuse it")

    parser = _Parser(prog="graph-csh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("bounds", parents=[common], help="a priori constants")
    sub.add_parser("solve", parents=[common], help="solve the equation at sigma=1")
    deg = sub.add_parser("degree", parents=[common], help="Brouwer degree on the a priori ball")
    deg.add_argument("--sigma", type=float, default=1.0)
    deg.add_argument("--no-pair-closure", dest="pair_closure", action="store_false")
    ver = sub.add_parser("verify", parents=[common], help="check a supplied solution")
    ver.add_argument("--solution", required=True, help="solution: JSON array or file")
    ver.add_argument("--sigma", type=float, default=1.0)
    sub.add_parser("bracket", parents=[common], help="lower/upper solutions for lam > 0")
    return parser


def solver_config(args) -> SolverConfig:
    overrides = {}
    for f in fields(SolverConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            overrides["seed"] = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    try:
        return SolverConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config_echo(args, cfg) -> dict:
    echo = {
        "command": args.command,
        "graph": args.graph,
        "f": args.f_spec,
        "lambda": args.lam,
        "p": args.p,
        "epsilon": args.epsilon,
        "format": args.format,
        "explore": args.explore,
        "backend": _kernels.BACKEND,
        "solver": asdict(cfg),
    }
    for extra in ("sigma", "solution", "pair_closure"):
        if hasattr(args, extra):
            echo[extra] = getattr(args, extra)
    return echo


def _problem(args):
    g = parse_graph(args.graph)
    f = parse_function(args.f_spec, g.vertex_count)
    if args.explore:
        return ProblemData.relaxed_data(g, args.lam, f, args.p)
    return ProblemData.create(g, args.lam, f, args.p)


def _epsilon(cfg, bounds):
    return cfg.epsilon if cfg.epsilon is not None else bounds.eps0 / 2.0


# ------------------------------------------------------------------ commands


def cmd_bounds(args, cfg, pd):
    b = compute_bounds(pd)
    doc = {"config": _config_echo(args, cfg), "bounds": b.to_dict()}
    rows = sorted(b.to_dict().items())
    return EXIT_OK, doc, dumps_csv(["name", "value"], rows)


def cmd_solve(args, cfg, pd):
    bounds = compute_bounds(pd)
    rep = solve_csh(pd, cfg, bounds)
    small = rep.info["small_eps"]
    doc = {
        "config": _config_echo(args, cfg),
        "bounds": bounds.to_dict(),
        "epsilon": rep.info["eps"],
        **rep.to_dict(),
        "in_bounds": rep.info["in_bounds"],
        "small_eps": {k: v for k, v in small.to_dict().items() if k != "trace"},
        "landmarks": [
            {"tau": float(t), "solution": u, "in_bounds": check_bound(pd, bounds, u)}
            for t, u in rep.info["landmarks"]
        ],
    }
    if "natural_failure" in rep.info:
        doc["natural_failure"] = rep.info["natural_failure"]
    code = EXIT_OK if rep.converged else EXIT_NONCONVERGENCE
    return code, doc, trace_csv(rep.trace)


def cmd_degree(args, cfg, pd):
    bounds = compute_bounds(pd)
    rep = global_degree(pd, cfg=cfg, sigma=args.sigma, pair_closure=args.pair_closure)
    doc = {"config": _config_echo(args, cfg), "bounds": bounds.to_dict(), **rep.to_dict()}
    rows = [
        [k, s, "" if p is None else p, *(float(x) for x in u)]
        for k, (u, s, p) in enumerate(zip(rep.solutions, rep.local_signs, rep.partners))
    ]
    header = ["index", "sign", "partner", *(f"u{x}" for x in range(pd.n))]
    return EXIT_OK, doc, dumps_csv(header, rows)


def cmd_verify(args, cfg, pd):
    u = parse_function(args.solution, pd.n)
    sigma = float(args.sigma)
    res = csh_residual(pd, u, sigma)
    residual_sup = float(np.max(np.abs(res)))
    eu = np.exp(u)
    # summing the equation over V kills the Laplacian
    mass = float(pd.lam * np.sum(eu * (eu - sigma)) + np.sum(pd.f))
    scale = float(abs(pd.lam) * np.sum(eu * (eu + sigma)) + np.sum(np.abs(pd.f)))
    hyp = pd.sign_condition()
    bounds = compute_bounds(pd) if hyp else None
    in_bounds = check_bound(pd, bounds, u) if bounds is not None else None
    ok = residual_sup <= cfg.residual_tol and abs(mass) <= cfg.residual_tol * max(1.0, scale)
    if bounds is not None:
        ok = ok and in_bounds
    doc = {
        "config": _config_echo(args, cfg),
        "bounds": None if bounds is None else bounds.to_dict(),
        "hypothesis": hyp,
        "sigma": sigma,
        "solution": u,
        "residual": res,
        "residual_sup": residual_sup,
        "mass_residual": mass,
        "in_bounds": in_bounds,
        "verified": bool(ok),
    }
    rows = [[k, float(u[k]), float(res[k])] for k in range(pd.n)]
    code = EXIT_OK if ok else EXIT_NONCONVERGENCE
    return code, doc, dumps_csv(["vertex", "u", "residual"], rows)


def cmd_bracket(args, cfg, pd):
    pd.require_strict()
    if pd.lam <= 0:
        raise HypothesisError("the lower/upper solution bracket needs lambda > 0")
    bounds = compute_bounds(pd)
    eps = _epsilon(cfg, bounds)
    br = construct_bracket(pd, eps, cfg, tighten=True)
    doc = {"config": _config_echo(args, cfg), "bounds": bounds.to_dict(), "epsilon": eps,
           "bracket": br.to_dict()}
    rows = [[x, br.u_minus[x], br.u_plus[x], br.k[x], br.v_eps[x]] for x in range(pd.n)]
    return EXIT_OK, doc, dumps_csv(["vertex", "u_minus", "u_plus", "k", "v_eps"], rows)


HANDLERS = {
    "bounds": cmd_bounds,
    "solve": cmd_solve,
    "degree": cmd_degree,
    "verify": cmd_verify,
    "bracket": cmd_bracket,
}


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = solver_config(args)
        pd = _problem(args)
        code, doc, table = HANDLERS[args.command](args, cfg, pd)
        _emit(dumps_json(doc) if args.format == "json" else table, args.output)
        return code
    except HypothesisError as exc:
        print(f"graph-csh: hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (SolverError, NonRegularError) as exc:
        print(f"graph-csh: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (UsageError, ParseError, GraphError, OSError, ValueError) as exc:
        print(f"graph-csh: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
