"""Helpers shared by the experiment scripts."""

from __future__ import annotations

from pathlib import Path

from refine import corpus as C
from refine.pipeline import PipelineConfig
from refine.querygen import GenConfig
from refine.synthcorpus import SynthSpec, generate_corpus


def write_synth(root: Path, seed: int, num_docs: int = 100, overlap: float = 0.9) -> Path:
    docs, queries = generate_corpus(SynthSpec(num_docs=num_docs, distractor_overlap=overlap, seed=seed))
    root.mkdir(parents=True, exist_ok=True)
    C.write_corpus(root / "documents.jsonl", docs)
    C.write_queries(root / "queries.jsonl", queries)
    return root


def offline_config(corpus_dir: Path, out: Path, seed: int, **kw) -> PipelineConfig:
    return PipelineConfig(
        documents=str(corpus_dir / "documents.jsonl"),
        queries=str(corpus_dir / "queries.jsonl"),
        output_dir=str(out),
        seed=seed,
        gen=GenConfig(offline=True),
        **kw,
    )
