"""Command-line entry point: ``gompertz-ks {run,sweep,check,estimate-gn}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .analysis import SearchBudget, estimate_gn
from .config import load_config
from .errors import ConfigError
from .mesh import build_grid
from .runner import EXIT_CONFIG, EXIT_OK, run_command, theorem_report, write_failure
from .sweep import load_sweep, sweep


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    return run_command(cfg, args.out, fail_on_blowup=args.fail_on_blowup)


def _cmd_sweep(args) -> int:
    cfg = load_sweep(args.config)
    outcome = sweep(cfg, args.out, jobs=args.jobs)
    sys.stdout.write(outcome.summary_csv)
    return outcome.exit_code


def _cmd_check(args) -> int:
    cfg = load_config(args.config)
    report = theorem_report(cfg, gn_override=args.gn_constant)
    if report is None:
        raise ConfigError("theorem conditions apply to the Gompertz source only", field="source")
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_estimate_gn(args) -> int:
    grid = build_grid(args.lx, args.ly, args.nx, args.ny)
    est = estimate_gn(grid, SearchBudget(args.budget, args.ascent_iters), args.seed)
    print(json.dumps(est.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gompertz-ks", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fail-on-blowup", action="store_true", help="exit 3 when the run is classified as blow-up suspect")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a parameter cross product")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("check", help="evaluate the boundedness hypotheses for a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--gn-constant", type=float, default=None, help="use this Gagliardo-Nirenberg constant instead of estimating it")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("estimate-gn", help="lower-bound the discrete Gagliardo-Nirenberg constant")
    p.add_argument("--lx", type=float, required=True)
    p.add_argument("--ly", type=float, required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--budget", type=int, required=True, help="number of multistarts")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ascent-iters", type=int, default=200)
    p.set_defaults(func=_cmd_estimate_gn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        write_failure(getattr(args, "out", None), "config", str(exc), EXIT_CONFIG, field=exc.field, line=exc.line)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
