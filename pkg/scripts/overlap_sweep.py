"""Recall@k of vanilla, finetune and refine as lexical overlap between documents grows.

    python scripts/overlap_sweep.py --overlaps 0 0.3 0.6 0.9 --seeds 0 1 2
"""

import argparse
from pathlib import Path

import numpy as np

from _common import offline_config, write_synth
from refine.pipeline import run_all

MODES = ("vanilla", "finetune", "refine")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--overlaps", type=float, nargs="+", default=[0.0, 0.3, 0.6, 0.9])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--num-docs", type=int, default=100)
    ap.add_argument("-k", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("runs/overlap"))
    args = ap.parse_args()

    print(f"| overlap | " + " | ".join(f"{m} R@{args.k}" for m in MODES) + " |")
    print("|---" * (len(MODES) + 1) + "|")
    for o in args.overlaps:
        rec = {m: [] for m in MODES}
        for s in args.seeds:
            tag = f"o{o:g}_s{s}"
            corpus = write_synth(args.out / tag / "corpus", s, args.num_docs, o)
            reports = run_all(offline_config(corpus, args.out / tag, s), MODES)
            for m in MODES:
                rec[m].append(reports[m].per_k[args.k]["recall"])
        print(f"| {o:g} | " + " | ".join(f"{np.mean(rec[m]):.3f}" for m in MODES) + " |")


if __name__ == "__main__":
    main()
