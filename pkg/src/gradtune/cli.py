"""Command-line interface.

    gradtune gen-data --task ac --sizes 2000,500,500 --seed 1 --out ac.gtds
    gradtune train-a --spec experiment.spec
    gradtune transfer --spec experiment.spec --mode gradual
    gradtune report --dir runs/experiment --format csv,json,text,png

Exit codes: 0 success, 2 config error, 3 data error, 4 training budget
exceeded (a run hit max_epochs before early stopping; outputs are still
written).
"""

from __future__ import annotations

import argparse
import sys

from .dataset import write_gtds
from .datasynth import generate_dataset
from .exper import (
    ConfigError,
    DataError,
    REPORT_FORMATS,
    build_report,
    emit_report,
    parse_spec_file,
    run_phase_a,
    run_phase_b,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BUDGET = 4


def _sizes(text: str) -> tuple[int, int, int]:
    parts = tuple(int(s) for s in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated counts, e.g. 2000,500,500")
    return parts


def _formats(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradtune",
        description="Transfer-learning experiments: gradual layer unfreezing vs plain fine tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic task dataset (GTDS file)")
    gen.add_argument("--task", required=True, help="task id (ac, acl, at, atl, sbl, sbt, sb2l, cnc)")
    gen.add_argument("--sizes", type=_sizes, default=(330_000, 10_000, 10_000),
                     help="train,valid,test counts (default: full 330k/10k/10k scale)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output .gtds path")

    for name, help_text in (
        ("train-a", "train the network on Task-A and store the checkpoint"),
        ("transfer", "run Task-B repetitions from the stored Task-A checkpoint"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec", required=True, help="experiment spec file")
        if name == "transfer":
            p.add_argument("--mode", required=True, choices=("fine", "gradual"))

    rep = sub.add_parser("report", help="aggregate transfer rows into report files")
    rep.add_argument("--dir", required=True, help="experiment output directory")
    rep.add_argument("--format", type=_formats, default=REPORT_FORMATS,
                     help="comma list from csv,json,text,png (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            ds = generate_dataset(args.task, args.sizes, args.seed)
            write_gtds(ds, args.out)
            print(f"wrote {args.out}: task={ds.task} sizes={tuple(len(s) for _, s in ds.splits())}")
            return EXIT_OK
        if args.command == "train-a":
            spec = parse_spec_file(args.spec)
            meta = run_phase_a(spec)
            errs = ", ".join(f"{t}={e:.2f}%" for t, e in meta["a_test_errs"].items())
            print(f"phase A done in {meta['epochs']} epochs; test error: {errs}")
            return EXIT_BUDGET if meta["capped"] else EXIT_OK
        if args.command == "transfer":
            spec = parse_spec_file(args.spec)
            rows, capped = run_phase_b(spec, args.mode)
            errs = [row["task_b_err"] for row in rows]
            print(f"{args.mode}: {len(rows)} repetitions, task-B test error "
                  f"{min(errs):.2f}..{max(errs):.2f}%")
            return EXIT_BUDGET if capped else EXIT_OK
        if args.command == "report":
            report = build_report(args.dir)
            written = emit_report(report, args.dir, args.format)
            for path in written:
                print(f"wrote {path}")
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")  # pragma: no cover
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
