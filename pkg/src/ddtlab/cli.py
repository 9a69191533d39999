"""``ddt-lab`` command line.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, EmitError
from .harness import emit, run_batch
from .scenario import load_scenario, parse_scenario, shipped_scenarios

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddt-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario batch")
    run.add_argument("--scenario", required=True, help="scenario file, or the name of a shipped scenario")
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--trace", help="write every run's trace as JSONL here")
    run.add_argument("--summary", help="write the run summary JSON here")
    run.add_argument("--format", choices=("json", "text"), default="text", help="stdout format")

    scen = sub.add_parser("scenarios", help="shipped reference scenarios")
    scen_sub = scen.add_subparsers(dest="action", required=True)
    scen_sub.add_parser("list")

    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("--scenario", required=True)
    return parser


def _run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        scenario = scenario.with_seed(args.seed)
    if args.runs < 1:
        raise ConfigError("runs", "must be >= 1")
    summary = run_batch(scenario, args.runs, keep_traces=bool(args.trace))
    if summary.completions + sum(summary.aborts.values()) != summary.runs:
        print("internal error: completions and aborts do not add up to runs", file=sys.stderr)
        return EXIT_INTERNAL
    if args.trace:
        emit(summary.traces, args.trace)
    if args.summary:
        emit(summary, args.summary)
    sys.stdout.write(summary.to_json() if args.format == "json" else summary.to_text())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "scenarios":
            for name, text in shipped_scenarios().items():
                s = parse_scenario(text)
                adv = s.adversary.strategy.value if s.adversary else "none"
                print(f"{name:16s} variant={s.variant.value:9s} adversary={adv:14s} rounds={s.rounds}")
            return EXIT_OK
        load_scenario(args.scenario)
        print(f"{args.scenario}: ok")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmitError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
