"""Command-line entry: render figures from pepsmetts artifacts."""

from __future__ import annotations

import argparse
import sys

from .figures import plot_correlators, plot_running_average


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Figures from pepsmetts analysis artifacts"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_corr = sub.add_parser("correlators", help="correlator vs distance panels")
    p_corr.add_argument("--csv", nargs="+", required=True, help="analysis CSVs")
    p_corr.add_argument("--ref", nargs="*", help="reference JSONs (one per CSV)")
    p_corr.add_argument("--title", nargs="*", help="panel titles")
    p_corr.add_argument("--out", required=True)

    p_run = sub.add_parser("running-average", help="running mean vs chain length")
    p_run.add_argument("--csv", required=True)
    p_run.add_argument("--observable", required=True)
    p_run.add_argument("--ref")
    p_run.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.command == "correlators":
        out = plot_correlators(
            args.csv, args.out, ref_paths=args.ref or None, titles=args.title
        )
    else:
        out = plot_running_average(
            args.csv, args.observable, args.out, ref_path=args.ref
        )
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
