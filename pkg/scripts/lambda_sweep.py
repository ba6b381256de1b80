"""In-domain and out-of-domain Recall@k as a function of the fusion weight lam.

Trains one refine head per lam on corpus A and scores it on A's labelled
queries and on corpus B's.

    python scripts/lambda_sweep.py --lams 0 0.2 0.35 0.5 0.65 0.8 1 --seeds 0 1 2
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from _common import offline_config, write_synth
from refine import corpus as C
from refine.pipeline import evaluate_encoder, load_encoder, run_augment, run_eval, run_train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 0.2, 0.35, 0.5, 0.65, 0.8, 1.0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--seed-a", type=int, default=11)
    ap.add_argument("--seed-b", type=int, default=12)
    ap.add_argument("-k", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("runs/lambda"))
    args = ap.parse_args()

    a = write_synth(args.out / "corpus_a", args.seed_a)
    b = write_synth(args.out / "corpus_b", args.seed_b)
    b_docs, b_queries = C.load_corpus(b / "documents.jsonl"), C.load_queries(b / "queries.jsonl")

    print(f"| lam | in-domain R@{args.k} | OOD R@{args.k} |")
    print("|---|---|---|")
    for lam in args.lams:
        ind, ood = [], []
        for s in args.seeds:
            cfg = offline_config(a, args.out / f"lam{lam:g}_s{s}", s)
            cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, lam=lam))
            run_augment(cfg)
            run_train(cfg, "refine")
            ind.append(run_eval(cfg, "refine").per_k[args.k]["recall"])
            enc = load_encoder(cfg, "refine")
            ood.append(evaluate_encoder(enc, b_docs, b_queries, [args.k]).per_k[args.k]["recall"])
        print(f"| {lam:g} | {np.mean(ind):.3f} | {np.mean(ood):.3f} |")


if __name__ == "__main__":
    main()
