"""Command-line entry point: ``gtsaga {run, sweep, inspect-topology, bounds}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .algorithms import binding_term, nonconvex_step_terms, pl_step_terms
from .harness.config import ConfigError, load_config
from .harness.experiment import StageError, expand_sweep, run_experiment
from .topology import (DEFAULT_RULES, TOPOLOGY_KINDS, WEIGHT_RULES, TopologyError,
                       build_mixing_matrix, build_topology)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output:
        cfg.output_dir = args.output
    result = run_experiment(cfg)
    print(f"wrote {result.output_dir}")
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.config).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load {args.config}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with nested sections")
    if args.output:
        raw["output_dir"] = args.output
    try:
        runs = expand_sweep(raw, [(field, values) for field, *values in args.vary])
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    for label, cfg in runs:
        result = run_experiment(cfg)
        finals = {name: a["final"]["stationarity_gap"]
                  for name, a in result.summary["algorithms"].items()}
        print(f"{label}: lambda={result.summary['lambda']:.6g} final stationarity {finals}")
    return 0


def _cmd_inspect(args) -> int:
    graph = build_topology(args.kind, args.n, seed=args.seed)
    w = build_mixing_matrix(graph, args.rule)
    err = w.stochasticity_error()
    status = "OK" if err <= 1e-12 else "FAILED"
    print(f"topology: {args.kind}, n = {args.n}, rule = {w.rule}")
    print(f"lambda = {w.lam:.12g}")
    print(f"doubly stochastic: {status} (max deviation {err:.3g})")
    return 0


def _cmd_bounds(args) -> int:
    terms = nonconvex_step_terms(args.lam, args.n, args.m, args.L)
    name = binding_term(terms)
    print(f"alpha1 = {terms[name]:.12g} (binding: {name})")
    if args.mu is not None:
        terms = pl_step_terms(args.lam, args.n, args.m, args.L, args.mu)
        name = binding_term(terms)
        print(f"alpha2 = {terms[name]:.12g} (binding: {name})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtsaga", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--output", help="override the output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="cartesian sweep over config fields")
    p.add_argument("config")
    p.add_argument("--vary", nargs="+", action="append", required=True,
                   metavar=("FIELD", "VALUE"),
                   help="dotted field followed by its values; repeat for more axes")
    p.add_argument("--output", help="override the base output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("inspect-topology", help="print lambda and a stochasticity check")
    p.add_argument("kind", choices=TOPOLOGY_KINDS)
    p.add_argument("n", type=int)
    p.add_argument("--rule", choices=WEIGHT_RULES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("bounds", help="theoretical step-size bounds")
    p.add_argument("lam", type=float)
    p.add_argument("n", type=int)
    p.add_argument("m", type=int)
    p.add_argument("L", type=float)
    p.add_argument("--mu", type=float)
    p.set_defaults(func=_cmd_bounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep" and any(len(v) < 2 for v in args.vary):
        parser.error("--vary needs a field and at least one value")
    if args.command == "inspect-topology" and args.rule is None:
        args.rule = DEFAULT_RULES[args.kind]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
    except (TopologyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
