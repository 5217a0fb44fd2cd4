"""Paired-seed BWT / GO comparison of gorp against both sequential baselines.

    python scripts/forgetting_benchmark.py --seeds 17 18 19 20 21 --out runs/bench
"""

import argparse
from pathlib import Path

import numpy as np

from gorp.config import RunConfig, load_config
from gorp.harness import train_sequence, write_table

METHODS = ("gorp", "seq_adam", "seq_lora_adam")
COLUMNS = ("method", "seed", "ACC", "BWT", "mean_GO")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[17, 18, 19, 20, 21])
    ap.add_argument("--config", help="base JSON config (method is overridden)")
    ap.add_argument("--out", help="directory for benchmark.tsv")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        for method in METHODS:
            cfg = load_config(args.config) if args.config else RunConfig()
            cfg.method, cfg.seed, cfg.data.seed = method, seed, seed
            rep = train_sequence(cfg).report
            rows.append({"method": method, "seed": seed, "ACC": rep.acc, "BWT": rep.bwt, "mean_GO": rep.mean_go})
            print(f"{method:14s} seed={seed} ACC={rep.acc:.4f} BWT={rep.bwt:+.4f} GO={rep.mean_go:.2e}")

    print("\nmedians")
    for method in METHODS:
        mine = [r for r in rows if r["method"] == method]
        print(f"{method:14s} " + " ".join(f"{k}={np.median([r[k] for r in mine]):+.4g}" for k in COLUMNS[2:]))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_table(rows, Path(args.out) / "benchmark.tsv", COLUMNS)


if __name__ == "__main__":
    main()
