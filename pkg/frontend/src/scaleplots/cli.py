"""plot: render figures from scalesgd output files."""

from __future__ import annotations

import argparse
import sys

from .figures import PlotInputError, plot_convergence, plot_gain_growth


def build_parser():
    parser = argparse.ArgumentParser(prog="plot", description="render scalesgd figures")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convergence", help="overlaid loss curves per worker count")
    conv.add_argument("--traces", nargs="+", required=True)
    conv.add_argument("--labels", nargs="+", default=None)
    conv.add_argument("--x", choices=["server_iter", "pca_time"], default="server_iter")
    conv.add_argument("--y", choices=["test_logloss", "train_logloss"], default="test_logloss")
    conv.add_argument("--bound", default=None, help="upper_bound.json annotation")
    conv.add_argument("--out", required=True)

    gg = sub.add_parser("gain-growth", help="gain growth bars with bound shading")
    gg.add_argument("--table", required=True, help="gain_growth.csv")
    gg.add_argument("--bound", default=None, help="upper_bound.json")
    gg.add_argument("--out", required=True)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convergence":
            plot_convergence(args.traces, args.out, labels=args.labels,
                             x=args.x, y=args.y, bound_path=args.bound)
        else:
            plot_gain_growth(args.table, args.out, bound_path=args.bound)
    except (PlotInputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
