"""Command line entry point: run, compare, gen-data, metrics."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from gorp.config import load_config
from gorp.errors import GorpError
from gorp.harness import COMPARE_COLUMNS, compare, run_continual
from gorp.metrics import read_report
from gorp.tasks import gen_permuted, gen_rotated, load_dataset, save_sequence

OUT_ENV = "GORP_OUT_DIR"


def _existing_file(parser: argparse.ArgumentParser, flag: str, path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        parser.error(f"{flag}: file not found: {path}")
    return p


def _default_out(cfg) -> Path:
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / f"{cfg.method}-seed{cfg.seed}"


def cmd_run(args, parser) -> int:
    cfg = load_config(_existing_file(parser, "--config", args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.check_orthogonality:
        cfg.optimizer.check_orthogonality = True
    out = Path(args.out or cfg.out_dir or _default_out(cfg))
    report = run_continual(cfg, out_dir=out)
    print(f"{cfg.method} seed={cfg.seed} ACC={report.acc:.4f} BWT={report.bwt:.4f} report={out / 'report.txt'}")
    return 0


def cmd_compare(args, parser) -> int:
    paths = [_existing_file(parser, "--configs", p) for p in args.configs]
    cfgs = [load_config(p) for p in paths]
    if args.seed is not None:
        cfgs = [dataclasses.replace(c, seed=args.seed) for c in cfgs]
    labels = [p.stem for p in paths]
    if len(set(labels)) != len(labels):
        labels = [f"{p.stem}-{i}" for i, p in enumerate(paths)]
    rows = compare(cfgs, out_dir=args.out, labels=labels)
    print("\t".join(COMPARE_COLUMNS))
    for row in rows:
        print("\t".join(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in COMPARE_COLUMNS))
    return 0


def cmd_gen_data(args, parser) -> int:
    if args.kind == "rotated":
        seq = gen_rotated(
            args.num_tasks, args.samples, args.dim, args.classes, args.angle_step, args.sigma, args.seed,
            test_samples=args.test_samples, radius=args.radius, holdout=args.holdout,
        )
    else:
        if args.base:
            base = load_dataset(_existing_file(parser, "--base", args.base))
        else:
            base = gen_rotated(
                1, args.samples, args.dim, args.classes, 0.0, args.sigma, args.seed,
                test_samples=args.test_samples, radius=args.radius,
            ).tasks[0]
        seq = gen_permuted(base, args.num_tasks, args.seed)
    for p in save_sequence(seq, args.out):
        print(p)
    return 0


def cmd_metrics(args, parser) -> int:
    report = read_report(_existing_file(parser, "--report", args.report))
    for key, value in report.header().items():
        print(f"{key} = {value}")
    print("ACC_MATRIX")
    with np.printoptions(precision=4, suppress=True):
        for row in report.acc_matrix:
            print(" ".join("-" if np.isnan(v) else f"{v:.4f}" for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gorp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-task progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one method over a task sequence")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help=f"output directory (default: config out_dir, then ${OUT_ENV}/<method>-seed<N>)")
    p.add_argument("--check-orthogonality", action="store_true", help="assert projected gradients stay orthogonal")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several configs on the same task sequence")
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--seed", type=int, help="override every config's seed")
    p.add_argument("--out", help="directory for comparison.tsv and per-run PO/GO matrices")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="write a synthetic task sequence as dataset files")
    p.add_argument("--kind", choices=("rotated", "permuted"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-tasks", type=int, default=3)
    p.add_argument("--samples", type=int, default=1000, help="training samples per task")
    p.add_argument("--test-samples", type=int, default=500)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--angle-step", type=float, default=30.0, help="degrees per task")
    p.add_argument("--sigma", type=float, default=0.4)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", action="store_true", help="also write one never-trained task")
    p.add_argument("--base", help="permuted: base dataset file (default: a generated rotated task)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("metrics", help="print the metrics stored in a report file")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, parser)
    except (GorpError, OSError) as exc:
        print(f"gorp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
