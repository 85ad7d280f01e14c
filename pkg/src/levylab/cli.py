"""Command line: ``levylab <subcommand> <config-path> [key=value ...]``.

Exit status is 0 when every threshold passes, 1 on a statistical failure and
2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, parse_config
from .errors import ConfigError, LevyLabError
from .experiments import resolve_name, run_experiment

SUBCOMMANDS = ("simulate", "ladder", "rho", "silverstein", "duality", "potential", "overshoot", "stationary",
               "reversal", "williams", "duquesne", "converge", "coupling", "lamperti", "entrance", "selftest")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levylab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("config", nargs="?", help="experiment config file (optional for selftest)")
    ap.add_argument("overrides", nargs="*", metavar="key=value",
                    help="override a config entry; bare keys refer to [params]")
    ap.add_argument("--quiet", action="store_true", help="do not print the summary")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.subcommand == "selftest" and (args.config is None or "=" in args.config):
            extra = [args.config] if args.config else []
            cfg = parse_config("[experiment]\nname = selftest\n", extra + args.overrides)
        elif args.config is None:
            raise ConfigError("a config path is required", "config")
        else:
            cfg = load_config(args.config, args.overrides)
        if not cfg.name:
            cfg.name = args.subcommand
        elif cfg.name != args.subcommand:
            if resolve_name(cfg.name) != args.subcommand:
                raise ConfigError(f"config names experiment {cfg.name!r}, not {args.subcommand!r}",
                                  "experiment.name")
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"levylab: config error: {exc}", file=sys.stderr)
        return 2
    except LevyLabError as exc:
        print(f"levylab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        sys.stdout.write(report.to_text())
        for f in report.files:
            print(f"wrote {f}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
