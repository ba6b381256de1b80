"""Ranked-retrieval metrics (binary relevance) and report tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Query, atomic_write_text
from .vectorstore import VectorStore

DEFAULT_KS = (1, 2, 3, 4, 5)
METRICS = ("map", "ndcg", "mrr", "recall")


class EvaluationError(ValueError):
    pass


def _check(relevant, k):
    if k < 1:
        raise EvaluationError(f"k must be at least 1, got {k}")
    if not relevant:
        raise EvaluationError("metric undefined for an empty relevant set")


def average_precision_at_k(ranked: Sequence[str], relevant, k: int) -> float:
    """Sum of precision@i over relevant hits in the top k, divided by |relevant|."""
    _check(relevant, k)
    hits, total = 0, 0.0
    for i, doc in enumerate(ranked[:k], start=1):
        if doc in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def ndcg_at_k(ranked: Sequence[str], relevant, k: int) -> float:
    _check(relevant, k)
    dcg = sum(1.0 / math.log2(i + 1) for i, doc in enumerate(ranked[:k], start=1) if doc in relevant)
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


def mrr_at_k(ranked: Sequence[str], relevant, k: int) -> float:
    _check(relevant, k)
    for i, doc in enumerate(ranked[:k], start=1):
        if doc in relevant:
            return 1.0 / i
    return 0.0


def recall_at_k(ranked: Sequence[str], relevant, k: int) -> float:
    _check(relevant, k)
    return len(set(ranked[:k]) & set(relevant)) / len(relevant)


METRIC_FUNCS = {
    "map": average_precision_at_k,
    "ndcg": ndcg_at_k,
    "mrr": mrr_at_k,
    "recall": recall_at_k,
}


@dataclass
class MetricsReport:
    per_k: dict[int, dict[str, float]]
    num_queries: int
    mode: str = ""
    config_hash: str = ""
    per_query: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config_hash": self.config_hash,
            "num_queries": self.num_queries,
            "per_k": {str(k): dict(v) for k, v in sorted(self.per_k.items())},
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "MetricsReport":
        return cls(
            per_k={int(k): dict(v) for k, v in rec["per_k"].items()},
            num_queries=int(rec["num_queries"]),
            mode=rec.get("mode", ""),
            config_hash=rec.get("config_hash", ""),
        )

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def score_rankings(rankings: Sequence[Sequence[str]], golds: Sequence[Iterable[str]],
                   ks: Iterable[int]) -> dict[int, dict[str, float]]:
    ks = sorted(set(ks))
    per_k = {}
    for k in ks:
        sums = dict.fromkeys(METRICS, 0.0)
        for ranked, gold in zip(rankings, golds):
            gold = set(gold)
            for name in METRICS:
                sums[name] += METRIC_FUNCS[name](ranked, gold, k)
        per_k[k] = {name: sums[name] / len(rankings) for name in METRICS}
    return per_k


def evaluate(queries: list[Query], store: VectorStore, embed: Callable[[str], np.ndarray],
             ks: Iterable[int] = DEFAULT_KS, *, mode: str = "", config_hash: str = "") -> MetricsReport:
    """Retrieve max(ks) documents per query once and average all metrics at each k."""
    ks = sorted(set(ks))
    if not ks or ks[0] < 1:
        raise EvaluationError(f"ks must be positive integers, got {ks}")
    if not queries:
        raise EvaluationError("no queries to evaluate")
    bad = [q.id for q in queries if not q.gold_doc_ids]
    if bad:
        raise EvaluationError(f"queries without gold documents: {bad}")
    unknown = sorted({(q.id, d) for q in queries for d in q.gold_doc_ids if d not in store})
    if unknown:
        raise EvaluationError(
            "gold documents missing from the store: "
            + ", ".join(f"{qid}->{d}" for qid, d in unknown)
        )
    depth = ks[-1]
    rankings = [[r.doc_id for r in store.search(embed(q.text), depth)] for q in queries]
    per_k = score_rankings(rankings, [q.gold_doc_ids for q in queries], ks)
    return MetricsReport(
        per_k, len(queries), mode, config_hash,
        per_query={q.id: r for q, r in zip(queries, rankings)},
    )


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def markdown_table(reports: dict[str, MetricsReport], ks: Iterable[int] | None = None,
                   metrics: Sequence[str] = METRICS) -> str:
    """Rows are report names, columns metric@k."""
    if ks is None:
        ks = sorted({k for r in reports.values() for k in r.per_k})
    cols = [f"{m.upper()}@{k}" for k in ks for m in metrics]
    lines = ["| model | " + " | ".join(cols) + " |", "|" + "---|" * (len(cols) + 1)]
    for name, rep in reports.items():
        cells = [_fmt(rep.per_k[k][m]) if k in rep.per_k else "-" for k in ks for m in metrics]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
