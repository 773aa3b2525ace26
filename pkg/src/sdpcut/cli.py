"""Command-line front end: solve an instance file, print or dump the result."""

from __future__ import annotations

import argparse
import json
import sys

from .bnb import (
    BRANCH_LEAST_FRACTIONAL,
    BRANCH_MOST_FRACTIONAL,
    Solution,
    SolverConfig,
    solve_serial,
)
from .instance import Graph, ParseError, load_instance
from .parallel import solve_parallel

JSON_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_BUDGET = 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as input errors (exit 1)."""

    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdpcut", description="Exact Max-Cut solver")
    p.add_argument("instance", help="instance file: 'n m' header then 'i j w' lines")
    p.add_argument("--rho", type=float, default=1.6, help="initial penalty (default 1.6)")
    p.add_argument("--eps", type=float, default=1e-5, help="bounding tolerance (default 1e-5)")
    p.add_argument(
        "--branching", choices=["most", "least"], default="most",
        help="branch on the most- or least-fractional variable",
    )
    p.add_argument("--workers", type=int, default=1, help="1 = serial, >1 = parallel engine")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--max-rounds", type=int, default=25, help="cutting-plane rounds per node")
    p.add_argument("--node-limit", type=int, default=None, help="stop after this many nodes")
    p.add_argument("--time-limit", type=float, default=None, help="stop after this many seconds")
    p.add_argument("--json", metavar="PATH", default=None, help="write a JSON report")
    p.add_argument("--quiet", action="store_true", help="suppress the text report")
    return p


def make_config(args) -> SolverConfig:
    return SolverConfig(
        rho0=args.rho,
        eps=args.eps,
        branching=BRANCH_MOST_FRACTIONAL if args.branching == "most" else BRANCH_LEAST_FRACTIONAL,
        max_rounds=args.max_rounds,
        root_max_rounds=2 * args.max_rounds,  # the root bound pays off globally
        seed=args.seed,
        workers=args.workers,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
    )


def run_report(path: str, g: Graph, sol: Solution, cfg: SolverConfig) -> dict:
    side = [v + 1 for v, s in enumerate(sol.best_cut.assignment) if s == 1]
    cuts = sol.stats.get("cuts_separated", {})
    return {
        "schema": JSON_SCHEMA_VERSION,
        "instance": path,
        "vertices": g.n,
        "edges": len(g.edges),
        "optimum": sol.optimum,
        "cut_side": side,
        "nodes": sol.nodes_evaluated,
        "wall_time_s": sol.wall_time,
        "proof": sol.proof,
        "lower_bound": sol.optimum,
        "upper_bound": sol.best_bound,
        "config": {
            "rho": cfg.rho0,
            "eps": cfg.eps,
            "branching": cfg.branching,
            "workers": cfg.workers,
            "seed": cfg.seed,
            "max_rounds": cfg.max_rounds,
            "node_limit": cfg.node_limit,
            "time_limit": cfg.time_limit,
        },
        "counters": {
            "admm_iterations": sol.stats.get("admm_iterations", 0),
            "cuts_separated": {str(k): cuts.get(k, 0) for k in (3, 5, 7)},
        },
    }


def _fmt(value: float) -> str:
    return f"{value:g}"


def render_text(report: dict) -> str:
    lines = [
        f"instance     {report['instance']}",
        f"vertices     {report['vertices']}",
        f"edges        {report['edges']}",
        f"optimum      {_fmt(report['optimum'])}",
        f"proof        {'optimal' if report['proof'] else 'budget-limited'}",
    ]
    if not report["proof"]:
        lines.append(
            f"bounds       lb {_fmt(report['lower_bound'])}  ub {_fmt(report['upper_bound'])}"
        )
    c = report["counters"]
    cuts = c["cuts_separated"]
    lines += [
        f"cut side     {report['cut_side']}",
        f"nodes        {report['nodes']}",
        f"admm iters   {c['admm_iterations']}",
        f"cuts 3/5/7   {cuts['3']}/{cuts['5']}/{cuts['7']}",
        f"wall time    {report['wall_time_s']:.2f} s",
    ]
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.workers > 1 and (args.node_limit is not None or args.time_limit is not None):
            raise ParseError("node/time limits are only supported with --workers 1")
        cfg = make_config(args)
        try:
            g = load_instance(args.instance)
        except OSError as exc:
            raise ParseError(f"cannot read {args.instance}: {exc}") from None
    except (ParseError, ValueError) as exc:
        print(f"sdpcut: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    sol = solve_parallel(g, cfg) if cfg.workers > 1 else solve_serial(g, cfg)
    report = run_report(args.instance, g, sol, cfg)

    if args.json:
        try:
            with open(args.json, "w", encoding="ascii") as fh:
                json.dump(report, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            print(f"sdpcut: error: cannot write {args.json}: {exc}", file=sys.stderr)
            return EXIT_INPUT_ERROR
    if not args.quiet:
        print(render_text(report))
    return EXIT_OK if sol.proof else EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
