"""Command-line entry point.

    refine [--config cfg.json] [--set section.key=value ...] <command> ...

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure
(LLM transport, training divergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as C
from . import pipeline as P
from .querygen import GenerationError, TransportError
from .synthcorpus import SynthSpec, generate_corpus
from .trainer import MODES, TrainingDiverged

log = logging.getLogger("refine")


def _config(args) -> P.PipelineConfig:
    overrides = list(args.overrides or [])
    if args.documents:
        overrides.append(f"documents={json.dumps(args.documents)}")
    if args.queries:
        overrides.append(f"queries={json.dumps(args.queries)}")
    if args.out:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if getattr(args, "offline", False):
        overrides.append("gen.offline=true")
    return P.PipelineConfig.load(args.config, overrides)


def cmd_ingest(args):
    cfg = _config(args)
    store = P.run_ingest(cfg)
    print(f"ingested {len(store)} documents (dimension {store.dimension}) -> {cfg.out / 'store.bin'}")


def cmd_augment(args):
    cfg = _config(args)
    rep = P.run_augment(cfg)
    print(json.dumps(rep, indent=2))
    if rep["failed_documents"]:
        print(f"{len(rep['failed_documents'])} documents failed; see mining_report.json", file=sys.stderr)
    if rep["triples_emitted"] == 0:
        print("no triples produced", file=sys.stderr)
        return 2
    return 0


def cmd_train(args):
    cfg = _config(args)
    P.run_train(cfg, args.mode)
    mode = args.mode or cfg.train.mode
    print(f"wrote {cfg.out / mode / 'head.json'}")


def cmd_eval(args):
    cfg = _config(args)
    mode = args.mode or cfg.train.mode
    rep = P.run_eval(cfg, mode, args.checkpoint)
    print(P.markdown_table({mode: rep}), end="")


def cmd_run_all(args):
    cfg = _config(args)
    reports = P.run_all(cfg, args.modes or P.MODES)
    print(P.markdown_table(reports), end="")


def cmd_run_ood(args):
    cfg = _config(args)
    summary = P.run_ood(cfg, args.ood_documents, args.ood_queries, args.seeds, args.k)
    print((cfg.out / "ood_summary.md").read_text(), end="")
    if summary["flagged_seeds"]:
        print(f"flagged seeds (refine OOD recall below finetune): {summary['flagged_seeds']}")


def cmd_compare(args):
    print(P.compare(args.metrics, args.output), end="")


def cmd_synth(args):
    spec = SynthSpec(
        num_docs=args.num_docs, distractor_overlap=args.overlap, seed=args.synth_seed,
        vocab_size=args.vocab_size,
    )
    docs, queries = generate_corpus(spec)
    out = Path(args.out or ".")
    C.write_corpus(out / "documents.jsonl", docs)
    C.write_queries(out / "queries.jsonl", queries)
    print(f"wrote {len(docs)} documents and {len(queries)} queries to {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a config value by dotted path, e.g. train.epochs=5")
    common.add_argument("--documents", help="documents.jsonl")
    common.add_argument("--queries", help="labelled queries.jsonl")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--threads", type=int, help="parallelism cap")
    common.add_argument("--offline", action="store_true", help="deterministic offline query generator")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="refine", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common], help="embed the corpus into a vector store").set_defaults(fn=cmd_ingest)
    sub.add_parser("augment", parents=[common], help="generate queries and mine triples").set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="train a head for one mode")
    p.add_argument("--mode", choices=MODES)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on labelled queries")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--checkpoint", help="head.json (default: <out>/<mode>/head.json)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("run-all", parents=[common], help="ingest, augment, train and eval every mode")
    p.add_argument("--modes", nargs="+", choices=MODES)
    p.set_defaults(fn=cmd_run_all)

    p = sub.add_parser("run-ood", parents=[common], help="train on one corpus, evaluate on another")
    p.add_argument("--ood-documents", required=True)
    p.add_argument("--ood-queries", required=True)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("-k", type=int, default=3)
    p.set_defaults(fn=cmd_run_ood)

    p = sub.add_parser("compare", help="join metrics.json files into one markdown table")
    p.add_argument("metrics", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic labelled corpus")
    p.add_argument("--out")
    p.add_argument("--num-docs", type=int, default=100)
    p.add_argument("--overlap", type=float, default=0.9)
    p.add_argument("--vocab-size", type=int, default=4000)
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args) or 0
    except (TransportError, GenerationError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (P.ConfigError, C.CorpusError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
