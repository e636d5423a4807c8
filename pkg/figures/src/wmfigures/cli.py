"""CLI: render wmswitch experiment CSVs into figures."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaMismatchError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wmfigures", description="Render figures from wmswitch CSV outputs."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    render_p = sub.add_parser("render", help="render one figure")
    render_p.add_argument(
        "--kind", required=True, choices=["sweep", "traces", "performance"],
        help="figure kind; 'performance' takes three steps CSVs "
        "(with-switching, without-switching, unattacked)",
    )
    render_p.add_argument("--in", dest="inputs", nargs="+", required=True, help="input CSV file(s)")
    render_p.add_argument("--out", required=True, help="output image path (.svg recommended)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(args.kind, args.inputs, args.out)
    except SchemaMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
