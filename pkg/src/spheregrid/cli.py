"""Command line benchmark and validation harness."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import (
    DEFAULT_DISCARD,
    DEFAULT_QUERIES,
    DEFAULT_REPEATS,
    BenchScenario,
    run_sweep,
    run_validation,
    write_csv,
)
from .query import SelectionWeights


def _parse_bits(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--bits wants three values, e.g. 4,4,4")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _parse_cyclic(text: str) -> tuple[bool, bool, bool]:
    text = text.strip().lower()
    if not set(text) <= set("xyz"):
        raise argparse.ArgumentTypeError("--cyclic wants a subset of 'xyz'")
    return ("x" in text, "y" in text, "z" in text)


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--weights wants ws,wb,wn")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheregrid-bench",
        description="Sweep neighbor-query benchmarks over a seeded scene and "
                    "emit one CSV row per distance step.",
    )
    parser.add_argument("--bits", type=_parse_bits, default=(4, 4, 4),
                        metavar="X,Y,Z",
                        help="log2 cells per axis (default 4,4,4 = 16^3)")
    parser.add_argument("--cyclic", type=_parse_cyclic, default=(False, False, False),
                        metavar="[x][y][z]",
                        help="wrap-around axes as a subset string, empty = none")
    parser.add_argument("--load", type=float, default=1.0, metavar="R",
                        help="average objects per cell (default 1.0)")
    parser.add_argument("--d-min", type=float, default=0.1)
    parser.add_argument("--d-max", type=float, default=None,
                        help="default: 3/4 of the largest axis extent")
    parser.add_argument("--d-step", type=float, default=0.1)
    parser.add_argument("--queries", type=int, default=DEFAULT_QUERIES, metavar="N",
                        help=f"queries per measurement (default {DEFAULT_QUERIES})")
    parser.add_argument("--repeats", type=int, default=DEFAULT_REPEATS, metavar="N",
                        help=f"repeats per measurement (default {DEFAULT_REPEATS})")
    parser.add_argument("--discard", type=int, default=DEFAULT_DISCARD, metavar="N",
                        help=f"worst repeats dropped (default {DEFAULT_DISCARD})")
    parser.add_argument("--method", default="auto",
                        choices=["auto", "sphere", "box", "nonempty", "naive"])
    parser.add_argument("--knn", type=int, default=None, metavar="K",
                        help="benchmark k-nearest queries instead of all-neighbors")
    parser.add_argument("--seed", type=int, default=0, metavar="S")
    parser.add_argument("--weights", type=_parse_weights, default=(1.0, 1.0, 1.0),
                        metavar="WS,WB,WN",
                        help="method selection weights (default 1,1,1)")
    parser.add_argument("--revert-all", type=float, default=None, metavar="D",
                        help="force the box method below this radius")
    parser.add_argument("--revert-knn", type=float, default=None, metavar="D",
                        help="force box-based k-NN below this initial radius")
    parser.add_argument("--table-cache", default=None, metavar="PATH",
                        help="load tables from PATH if valid, else build and save")
    parser.add_argument("--csv", default=None, metavar="PATH",
                        help="output CSV path (default: stdout)")
    parser.add_argument("--figures", action="store_true",
                        help="also render PNG figures next to the CSV file")
    parser.add_argument("--validate", action="store_true",
                        help="run the oracle-equivalence suite instead of timing")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    ws, wb, wn = args.weights
    scenario = BenchScenario(
        bits=args.bits,
        cyclic=args.cyclic,
        load=args.load,
        seed=args.seed,
        d_min=args.d_min,
        d_max=args.d_max,
        d_step=args.d_step,
        queries=args.queries,
        repeats=args.repeats,
        discard=args.discard,
        method=args.method,
        knn=args.knn,
        weights=SelectionWeights(
            sphere=ws, box=wb, nonempty=wn,
            revert_all=args.revert_all, revert_knn=args.revert_knn,
        ),
        table_cache=args.table_cache,
    )

    if args.validate:
        report = run_validation(scenario)
        print(report)
        return 0 if report.passed else 1

    rows = run_sweep(scenario)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            write_csv(rows, fh)
        if args.figures:
            from .plots import render_figures

            for path in render_figures(rows, args.csv):
                print(f"wrote {path}", file=sys.stderr)
    else:
        if args.figures:
            print("--figures needs --csv PATH to place the images", file=sys.stderr)
            return 2
        write_csv(rows, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
