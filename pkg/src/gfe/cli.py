"""Command line entry point ``gfe``.

Exit codes: 0 when every solve converged, 2 on solver failure, 3 on a
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import config_from_dict, interpolation_study, load_config, run, summary
from .errors import ConfigError, GfeError
from .problems import problem_registry

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_args(p):
    p.add_argument("--problem", help="problem name (see list-problems)")
    p.add_argument("--order", type=int, help="polynomial order m (1 or 2)")
    p.add_argument("--levels", type=int, help="number of refinement levels (>= 2)")
    p.add_argument("--out", help="CSV output path ('-' for stdout)")
    p.add_argument("--quad-degree", type=int, dest="quad_degree", help="energy quadrature degree override")
    p.add_argument("--seed", type=int, help="seed for the initial perturbation")
    p.add_argument("--config", help="TOML file with [problem], [solver] and [output] tables")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="gfe", description="Geodesic finite element benchmarks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run_args(sub.add_parser("bench", help="solve on nested meshes and tabulate errors"))
    _add_run_args(sub.add_parser("interp-study", help="interpolation errors of the exact solution"))
    sub.add_parser("list-problems", help="print the registered problems")
    return parser


def _config(args):
    overrides = {
        "problem": args.problem,
        "order": args.order,
        "levels": args.levels,
        "out": args.out,
        "quad_degree": args.quad_degree,
        "seed": args.seed,
    }
    if args.config:
        return load_config(args.config, **overrides)
    return config_from_dict({}, **overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-problems":
        for name, pdef in problem_registry().items():
            orders = ",".join(str(m) for m in pdef.orders)
            print(f"{name}\t{pdef.manifold!r}\td={pdef.dim}\torders={orders}\t{pdef.description}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        if args.command == "bench":
            result = run(cfg)
        else:
            result = interpolation_study(cfg)
    except ConfigError as exc:
        print(f"gfe: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GfeError as exc:
        print(f"gfe: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if cfg.out not in (None, "-"):
        print(summary(result, cfg.order, "bench" if args.command == "bench" else "interp"), end="", file=sys.stderr)
    if args.command == "bench" and not result.converged:
        print("gfe: solver failure: not all levels converged", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
