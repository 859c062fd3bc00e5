"""Command-line figure renderer.

``plots <kind> --in <table> --out <file>`` draws one figure per
invocation, sequentially, from the monitoring toolchain's CSV outputs.
Exit codes mirror that toolchain: 0 success, 1 usage or schema problem,
2 unexpected failure.  Fitted numbers (the bench_scaling regression)
are printed at full precision alongside the output path.
"""

from __future__ import annotations

import argparse
import sys

from .errors import PlotsError
from .figures import KINDS, FigureSpec, render

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="plots", description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS, help="figure to draw")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="TABLE", help="input CSV path(s)")
    parser.add_argument("--out", required=True, help="PNG file to write")
    parser.add_argument("--title", default=None, help="figure title override")
    parser.add_argument("--xlabel", default=None, help="x-axis label override")
    parser.add_argument("--ylabel", default=None, help="y-axis label override")
    parser.add_argument("--damage-step", type=int, default=None,
                        help="first step whose true state is unsafe "
                             "(error_comparison only)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    spec = FigureSpec(
        kind=args.kind, inputs=tuple(args.inputs), out=args.out,
        title=args.title, xlabel=args.xlabel, ylabel=args.ylabel,
        damage_step=args.damage_step,
    )
    try:
        result = render(spec)
    except PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover — defensive catch-all
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.path}")
    for name, value in result.annotations.items():
        print(f"  {name} = {value:.17g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
