"""Command-line front end: ``verify --scenario NAME|PATH --suite NAME|all``."""
from __future__ import annotations

import argparse
import sys

from .catalog import UNIMPLEMENTED, scenario_names
from .config import SUITES, ConfigError, resolve
from .report import EXIT_CONFIG, emit_plot_data, grid_study, run, summary_lines, write_report


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="verify",
        description="Verify circle-bundle identities and holonomy estimates on a catalog or configured scenario.",
        epilog="Exit codes: 0 all pass, 1 verification failure, 2 configuration error, 3 numerically indeterminate.",
    )
    p.add_argument("--scenario", help="catalog name or path to a YAML/JSON configuration")
    p.add_argument("--suite", action="append", metavar="NAME",
                   help=f"one of {', '.join(SUITES)} or all (repeatable; default all)")
    p.add_argument("--grid", type=int, help="number of sample points per identity check (default 16)")
    p.add_argument("--samples", type=int, help="Ambrose-Singer sample points (default 64)")
    p.add_argument("--tol", action="append", default=[], metavar="SUITE=VALUE",
                   help="override the residual bound of every entry in a suite")
    p.add_argument("--out", help="write the JSON report here (timings go to OUT.timings.json)")
    p.add_argument("--plots", metavar="DIR", help="write residuals.tsv and singular_values.tsv into DIR")
    p.add_argument("--list", action="store_true", help="list catalog scenarios and exit")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.list:
            for name in scenario_names():
                print(name)
            for name, what in UNIMPLEMENTED.items():
                print(f"{name} (not implemented: {what})")
            return 0
        if not args.scenario:
            raise ConfigError("--scenario is required")
        cfg = resolve(args.scenario, args.suite, args.grid, args.samples, args.tol, args.out, args.plots)
        report, code, timings = run(cfg)
    except ConfigError as exc:
        print(f"verify: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out:
        write_report(report, cfg.out, timings)
    if cfg.plots:
        emit_plot_data(report, cfg.plots, grid_study(cfg))
    for line in summary_lines(report):
        print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
