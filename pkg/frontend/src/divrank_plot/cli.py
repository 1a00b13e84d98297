"""Command line: divrank-plot --in runs.csv --metric exact_perf --out fig.png"""

from __future__ import annotations

import argparse
import sys

from .core import METRICS, SchemaError, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="divrank-plot",
        description="Render simulator run CSVs as performance-curve figures")
    ap.add_argument("--in", dest="src", required=True, help="input CSV path")
    ap.add_argument("--metric", default="exact_perf", choices=list(METRICS))
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--downsample", type=int, default=2000,
                    help="max points per curve")
    ap.add_argument("--title", default=None)
    args = ap.parse_args(argv)

    try:
        curves = render(args.src, args.metric, args.out, args.downsample,
                        args.title)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {len(curves)} curves "
          f"({', '.join(c.algorithm for c in curves)})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
