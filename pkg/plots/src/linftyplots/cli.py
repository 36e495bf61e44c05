"""linfty-plots: batch figure regeneration from experiment artifacts."""

from __future__ import annotations

import argparse
import sys

from . import io
from .panels import FigureSpec, render_sigma_panels
from .rates import render_rate_table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linfty-plots",
        description="render sigma contour panels and rate tables from "
                    "linftylab output directories")
    sub = parser.add_subparsers(dest="command", required=True)

    panels = sub.add_parser("panels", help="contour panels for one experiment")
    panels.add_argument("experiment_dir")
    panels.add_argument("--exponents", default=None,
                        help="comma-separated subset of the reporting exponents")
    panels.add_argument("--levels", type=int, default=10)
    panels.add_argument("--variable", choices=("density", "log_density"),
                        default="density")
    panels.add_argument("--out", default=None)
    panels.add_argument("--format", choices=("png", "svg"), default="png")

    rates = sub.add_parser("rates", help="table and log-log plot from a rate CSV")
    rates.add_argument("csv_path")
    rates.add_argument("--out", default=".")
    rates.add_argument("--format", choices=("png", "svg"), default="png")
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        if args.command == "panels":
            exponents = None
            if args.exponents:
                exponents = [float(tok) for tok in args.exponents.split(",")]
            spec = FigureSpec(args.experiment_dir, exponents=exponents,
                              level_count=args.levels, variable=args.variable,
                              out_dir=args.out, image_format=args.format)
            result = render_sigma_panels(spec)
            for panel in result.panels:
                print(panel.note)
            print(f"render log: {result.log_path}")
            return 0 if result.rendered else 1
        if args.command == "rates":
            render = render_rate_table(args.csv_path, args.out, args.format)
            print(open(render.table_path).read(), end="")
            if render.warning:
                print(f"warning: {render.warning}", file=sys.stderr)
            return 0
    except (io.ArtifactError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
