"""Command line entry point.

  mpslam-plots map     --run DIR --step N --out map.png
  mpslam-plots metrics --run DIR --out curves.png
"""

from __future__ import annotations

import argparse
import sys

from .curves import plot_metrics
from .mapfig import plot_map
from .runfiles import RunDirError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mpslam-plots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="environment + true/estimated map panel")
    p_map.add_argument("--run", required=True)
    p_map.add_argument("--step", type=int, required=True)
    p_map.add_argument("--out", required=True)

    p_cur = sub.add_parser("metrics", help="metric curves over time")
    p_cur.add_argument("--run", required=True)
    p_cur.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "map":
            plot_map(args.run, args.step, args.out)
        else:
            plot_metrics(args.run, args.out)
    except RunDirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
