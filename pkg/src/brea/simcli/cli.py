"""``brea run | sweep-q | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig, validate_config
from .runner import InvalidConfig, run_experiment, sweep_q

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNRECOVERABLE = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--n", type=int, dest="N")
    p.add_argument("--a", type=int, dest="A")
    p.add_argument("--d", type=int, dest="D")
    p.add_argument("--t", type=int, dest="T")
    p.add_argument("--m", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=("fedavg", "brea", "both"))
    p.add_argument("--adversary", help="poison, invalid, distances, aggregates, accuse, all, none; join with '+'")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(N=args.N, A=args.A, D=args.D, T=args.T, m=args.m, q=args.q,
                              rounds=args.rounds, seed=args.seed, scheme=args.scheme,
                              adversary=args.adversary)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brea", description="Byzantine-resilient secure aggregation simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _add_common(run)
    run.add_argument("--out", required=True, help="output directory")

    sweep = sub.add_parser("sweep-q", help="one run per quantization level")
    _add_common(sweep)
    sweep.add_argument("--qs", default="32,256,1024", help="comma-separated q values")
    sweep.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="check a config without running it")
    _add_common(val)
    return parser


def _summary(result) -> str:
    parts = []
    for scheme, res in result.results.items():
        last = res.rows[-1]
        aborted = sum(1 for r in res.rows if r.aborted)
        parts.append(f"{scheme}: loss={last.loss:.4f} acc={last.accuracy:.3f} aborted={aborted}/{len(res.rows)}")
    return "; ".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        problems = validate_config(cfg)
        if problems:
            for p in problems:
                print(f"violation: {p}")
            return EXIT_INVALID
        print("ok")
        return EXIT_OK

    try:
        if args.command == "run":
            results = [run_experiment(cfg, args.out)]
        else:
            qs = [int(q) for q in args.qs.split(",") if q.strip()]
            by_q = sweep_q(cfg, qs, args.out)
            results = list(by_q.values())
            print(json.dumps({str(q): r.results[s].rows[-1].loss for q, r in by_q.items()
                              for s in r.results if s == "brea" or len(r.results) == 1}))
    except InvalidConfig as exc:
        for p in exc.violations:
            print(f"violation: {p}", file=sys.stderr)
        return EXIT_INVALID

    for r in results:
        print(_summary(r))
    brea_runs = [r.results["brea"] for r in results if "brea" in r.results]
    if brea_runs and all(res.all_aborted for res in brea_runs):
        print("every BREA round failed to decode", file=sys.stderr)
        return EXIT_UNRECOVERABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
