"""Command-line entry point: ``qpms run | list | validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from qpms.errors import ConfigurationError, ContractError
from qpms.scenarios import Scenario, ScenarioRuntimeError, ScenarioValidationError, list_presets, run_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FATAL = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpms", description="Spatiotemporal mode-sorter simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log study progress")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or scenario file")
    run.add_argument("scenario", help="preset name or path to a scenario JSON file")
    run.add_argument("--out", default=None, help="output directory (default: scenario output_dir or ./results)")
    run.add_argument("--jobs", type=int, default=None, help="worker threads (default: CPU count)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--poisson", action="store_true", help="draw Poisson counts instead of expected counts")
    sub.add_parser("list", help="list presets")
    val = sub.add_parser("validate", help="validate a scenario file without running it")
    val.add_argument("scenario")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        for name, desc in list_presets().items():
            print(f"{name:<24}{desc}")
        return EXIT_OK
    try:
        if args.command == "validate":
            scenario = Scenario.load(args.scenario)
            print(f"ok: {scenario.name} ({scenario.hash[:12]})")
            return EXIT_OK
        scenario = Scenario.load(args.scenario, args.seed, True if args.poisson else None)
    except (ScenarioValidationError, ConfigurationError, ContractError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        manifest = run_scenario(scenario, args.out, args.jobs)
    except ScenarioRuntimeError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL
    print(f"{manifest.scenario}: {len(manifest.files)} files, {len(manifest.failures)} flagged failures")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
