"""coalmix-plot: render a sweep/scan CSV into an SVG or PNG figure."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotError, PlotSpec, render

EX_DATAERR = 65


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalmix-plot", description=__doc__)
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--in", dest="csv_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="out_path", required=True, help="output .svg or .png")
    parser.add_argument("--f", type=float, default=None,
                        help="phase-heatmap: select this f when the CSV has several")
    parser.add_argument("--boundary-c", type=float, default=1.0,
                        help="phase-heatmap: constant for the overlay m = c/(f^2 sqrt(k))")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        csv_path=args.csv_path,
        kind=args.kind,
        out_path=args.out_path,
        fix_f=args.f,
        boundary_c=args.boundary_c,
    )
    try:
        out = render(spec)
    except PlotError as exc:
        print(f"coalmix-plot: {exc}", file=sys.stderr)
        sys.exit(EX_DATAERR)
    print(f"wrote {out}", file=sys.stderr)
    sys.exit(0)


if __name__ == "__main__":
    main()
