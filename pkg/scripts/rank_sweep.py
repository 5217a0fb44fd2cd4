"""Final ACC of gorp for several projector ranks on one task sequence.

    python scripts/rank_sweep.py --ranks 4 8 16 32 --seed 17 --out runs/sweep
"""

import argparse

from gorp.config import RunConfig, load_config
from gorp.harness import SWEEP_COLUMNS, rank_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ranks", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--config", help="base JSON config")
    ap.add_argument("--out", help="directory for rank_sweep.tsv")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else RunConfig()
    cfg.seed = args.seed
    rows = rank_sweep(cfg, args.ranks, args.out)
    print("\t".join(SWEEP_COLUMNS))
    for row in rows:
        print("\t".join(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in SWEEP_COLUMNS))


if __name__ == "__main__":
    main()
