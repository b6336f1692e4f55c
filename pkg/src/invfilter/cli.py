"""Command line: ``invfilter run|validate|oracle``."""

from __future__ import annotations

import argparse
import json
import sys

from . import runner
from .config import ConfigError, load_config, validate
from .oracles import run_oracles

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = runner.run(cfg, args.output)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for label, pred, fit, _ in result.slopes:
        print(f"{label}: predicted {pred:.4f}, fitted {fit:.4f}")
    if cfg.experiment == "oracle_suite" and not result.summary["all_passed"]:
        return EXIT_FAIL
    return EXIT_OK


def _cmd_validate(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        report = {"valid": False, "errors": [str(exc)], "warnings": [], "cost": None}
    else:
        report = validate(text)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["valid"] else EXIT_CONFIG


def _cmd_oracle(args):
    checks = run_oracles()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.detail}".rstrip())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="invfilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides output_dir)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="check a config file and estimate its cost")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("oracle", help="run the reference checks")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
