"""plotkit render --kind ... --input a.csv [b.csv] --out fig.png [options]"""

import argparse
import json
import sys

from .figures import FIGURE_KINDS, FigureSpec, render
from .io import PlotInputError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--group-by")
    p.add_argument("--value-col")
    p.add_argument("--normalization", default="none")
    p.add_argument("--params", default="{}", help="JSON dict of kind-specific options")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind, inputs=args.input, output=args.out,
            group_by=args.group_by, value_col=args.value_col,
            normalization=args.normalization, params=json.loads(args.params),
        )
        render(spec)
    except (PlotInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(spec.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
