"""Training-triple synthesis: generated queries plus mined hard negatives."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .corpus import Document, TrainingTriple
from .querygen import GenConfig, generate_all
from .vectorstore import VectorStore, ingest

log = logging.getLogger(__name__)


class MiningError(ValueError):
    pass


@dataclass(frozen=True)
class NegativeMiningConfig:
    retrieve_depth: int = 50
    band_low: float = 0.5
    band_high: float = 0.7
    exclude_top: int = 5
    negatives_per_query: int = 5
    fallback_rank_window: tuple[int, int] = (6, 15)

    def __post_init__(self):
        if not self.band_low < self.band_high:
            raise ValueError("band_low must be below band_high")
        if not 0 <= self.exclude_top < self.retrieve_depth:
            raise ValueError("exclude_top must lie in [0, retrieve_depth)")
        if not 1 <= self.negatives_per_query <= self.retrieve_depth - self.exclude_top:
            raise ValueError("negatives_per_query must lie in [1, retrieve_depth - exclude_top]")
        lo, hi = self.fallback_rank_window
        if not 1 <= lo <= hi:
            raise ValueError(f"bad fallback_rank_window {self.fallback_rank_window}")
        object.__setattr__(self, "fallback_rank_window", (int(lo), int(hi)))


@dataclass(frozen=True)
class MiningOutcome:
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]
    fallback: bool


def mine_negatives(query_vec, store: VectorStore, positive_id: str,
                   cfg: NegativeMiningConfig) -> MiningOutcome:
    if positive_id not in store:
        raise MiningError(f"positive document {positive_id!r} not in store")
    if len(store) <= cfg.exclude_top:
        raise MiningError(f"store of {len(store)} documents cannot exclude the top {cfg.exclude_top}")
    m = cfg.negatives_per_query
    depth = max(cfg.retrieve_depth, cfg.fallback_rank_window[1])
    ranked = store.search(query_vec, depth)

    picked = [
        r for r in ranked[cfg.exclude_top : cfg.retrieve_depth]
        if r.doc_id != positive_id and cfg.band_low <= r.score <= cfg.band_high
    ][:m]
    if picked:
        return MiningOutcome(tuple(r.doc_id for r in picked), tuple(r.score for r in picked), False)

    lo, hi = cfg.fallback_rank_window
    picked = [r for r in ranked[lo - 1 : hi] if r.doc_id != positive_id][:m]
    return MiningOutcome(tuple(r.doc_id for r in picked), tuple(r.score for r in picked), True)


def select_negatives(query_vec, store: VectorStore, positive_id: str,
                     cfg: NegativeMiningConfig) -> list[str]:
    """Hard negatives for one query, best-scoring first.

    A candidate must rank below the first ``exclude_top`` results, score
    inside the inclusive band, and differ from the positive. If the band
    is empty the ranks of ``fallback_rank_window`` are used instead.
    """
    return list(mine_negatives(query_vec, store, positive_id, cfg).doc_ids)


@dataclass
class MiningReport:
    documents: int = 0
    queries_generated: int = 0
    triples_emitted: int = 0
    band_fallbacks: int = 0
    dropped_no_negatives: int = 0
    failed_documents: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "queries_generated": self.queries_generated,
            "triples_emitted": self.triples_emitted,
            "band_fallbacks": self.band_fallbacks,
            "dropped_no_negatives": self.dropped_no_negatives,
            "failed_documents": dict(sorted(self.failed_documents.items())),
        }


def build_dataset(docs: list[Document], gen_cfg: GenConfig, mine_cfg: NegativeMiningConfig,
                  embed: Callable[[str], np.ndarray], *, client=None, threads: int | None = None,
                  store: VectorStore | None = None) -> tuple[list[TrainingTriple], MiningReport]:
    """Generate queries per document and pair each with its source and mined negatives.

    ``embed`` must be the frozen (pre-fine-tuning) model. Documents whose
    generation fails are recorded in the report and skipped.
    """
    if not docs:
        raise MiningError("build_dataset needs at least one document")
    store = store or ingest(docs, embed)
    report = MiningReport(documents=len(docs))
    can_mine = len(store) > mine_cfg.exclude_top
    triples: list[TrainingTriple] = []

    for doc, result in generate_all(docs, gen_cfg, client, threads):
        if isinstance(result, Exception):
            report.failed_documents[doc.id] = str(result)
            log.warning("skipping document %s: %s", doc.id, result)
            continue
        report.queries_generated += len(result)
        for q in result:
            if not can_mine:
                report.dropped_no_negatives += 1
                continue
            out = mine_negatives(embed(q.text), store, doc.id, mine_cfg)
            report.band_fallbacks += out.fallback
            if not out.doc_ids:
                report.dropped_no_negatives += 1
                continue
            triples.append(TrainingTriple(q, doc.id, out.doc_ids))
    report.triples_emitted = len(triples)
    if report.dropped_no_negatives:
        log.info("dropped %d queries with no negatives", report.dropped_no_negatives)
    return triples, report
