"""Documents, queries, training triples and their JSONL files.

Every record type is a frozen dataclass. Files are line-delimited JSON,
one object per line, written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


@dataclass(frozen=True)
class Document:
    id: str
    text: str

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError(f"document id must be a non-empty string, got {self.id!r}")
        if not isinstance(self.text, str) or len(self.text) < 1:
            raise CorpusError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    source_doc_id: str | None = None
    gold_doc_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError(f"query id must be a non-empty string, got {self.id!r}")
        if not isinstance(self.text, str) or not self.text:
            raise CorpusError(f"query {self.id!r} has empty text")
        object.__setattr__(self, "gold_doc_ids", frozenset(self.gold_doc_ids))


@dataclass(frozen=True)
class TrainingTriple:
    query: Query
    positive_doc_id: str
    negative_doc_ids: tuple[str, ...]

    def __post_init__(self):
        negs = tuple(self.negative_doc_ids)
        object.__setattr__(self, "negative_doc_ids", negs)
        if self.positive_doc_id in negs:
            raise CorpusError(
                f"triple {self.query.id!r}: positive {self.positive_doc_id!r} listed as negative"
            )
        if len(set(negs)) != len(negs):
            raise CorpusError(f"triple {self.query.id!r}: duplicate negatives")


@dataclass(frozen=True)
class SplitSpec:
    validation_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must lie in [0, 1), got {self.validation_fraction}"
            )


def check_triples(triples: Iterable[TrainingTriple], doc_ids: Iterable[str]) -> None:
    """Raise CorpusError if any triple references a document outside ``doc_ids``."""
    known = set(doc_ids)
    for t in triples:
        missing = [d for d in (t.positive_doc_id, *t.negative_doc_ids) if d not in known]
        if missing:
            raise CorpusError(f"triple {t.query.id!r} references unknown documents {missing}")


def check_queries(queries: Iterable[Query], doc_ids: Iterable[str]) -> None:
    known = set(doc_ids)
    for q in queries:
        if q.source_doc_id is not None and q.source_doc_id not in known:
            raise CorpusError(f"query {q.id!r}: unknown source document {q.source_doc_id!r}")
        unknown = sorted(q.gold_doc_ids - known)
        if unknown:
            raise CorpusError(f"query {q.id!r}: unknown gold documents {unknown}")


# --- JSONL plumbing -------------------------------------------------------


def _read_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_jsonl(path, records: Iterable[dict]) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n" for r in records]
    atomic_write_text(path, "".join(lines))


def load_corpus(path) -> list[Document]:
    docs: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, rec in _read_jsonl(path):
        try:
            doc = Document(id=rec["id"], text=rec["text"])
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if doc.id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate document id {doc.id!r} (first seen on line {seen[doc.id]})"
            )
        seen[doc.id] = lineno
        docs.append(doc)
    return docs


def write_corpus(path, docs: Iterable[Document]) -> None:
    _write_jsonl(path, ({"id": d.id, "text": d.text} for d in docs))


def _query_record(q: Query) -> dict:
    return {
        "id": q.id,
        "text": q.text,
        "source_doc_id": q.source_doc_id,
        "gold_doc_ids": sorted(q.gold_doc_ids),
    }


def load_queries(path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, rec in _read_jsonl(path):
        try:
            q = Query(
                id=rec["id"],
                text=rec["text"],
                source_doc_id=rec.get("source_doc_id"),
                gold_doc_ids=frozenset(rec.get("gold_doc_ids") or ()),
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if q.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate query id {q.id!r}")
        seen.add(q.id)
        queries.append(q)
    return queries


def write_queries(path, queries: Iterable[Query]) -> None:
    _write_jsonl(path, (_query_record(q) for q in queries))


def triple_to_record(t: TrainingTriple) -> dict:
    return {
        "query_id": t.query.id,
        "query_text": t.query.text,
        "positive_doc_id": t.positive_doc_id,
        "negative_doc_ids": list(t.negative_doc_ids),
    }


def load_triples(path) -> list[TrainingTriple]:
    triples = []
    for lineno, rec in _read_jsonl(path):
        try:
            q = Query(
                id=rec["query_id"], text=rec["query_text"], source_doc_id=rec["positive_doc_id"]
            )
            triples.append(
                TrainingTriple(q, rec["positive_doc_id"], tuple(rec["negative_doc_ids"]))
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return triples


def write_triples(path, triples: Iterable[TrainingTriple]) -> None:
    _write_jsonl(path, (triple_to_record(t) for t in triples))


# --- splitting ------------------------------------------------------------


def split_triples(
    triples: list[TrainingTriple], spec: SplitSpec
) -> tuple[list[TrainingTriple], list[TrainingTriple]]:
    """Split triples into (train, validation), keeping each source document whole.

    Groups are keyed by positive document and visited in a seeded random
    order; the validation set is the subset of groups, earliest in that
    order, whose sizes sum to exactly ``floor(fraction * N)``. When no
    subset of group sizes hits the target exactly, the largest reachable
    size below it is used. Both lists keep the input order.
    """
    if not triples:
        raise ValueError("split_triples needs at least one triple")
    target = int(spec.validation_fraction * len(triples))

    groups: dict[str, list[int]] = {}
    for i, t in enumerate(triples):
        groups.setdefault(t.positive_doc_id, []).append(i)
    keys = sorted(groups)
    random.Random(spec.seed).shuffle(keys)
    sizes = [len(groups[k]) for k in keys]

    # subset-sum over group sizes as a bitset of reachable totals
    mask = (1 << (target + 1)) - 1
    history = []
    reach = 1
    for s in sizes:
        history.append(reach)
        reach = (reach | (reach << s)) & mask
    total = target
    while not (reach >> total) & 1:
        total -= 1

    chosen: set[str] = set()
    for key, s, before in zip(reversed(keys), reversed(sizes), reversed(history)):
        if (before >> total) & 1:
            continue
        chosen.add(key)
        total -= s
    assert total == 0

    train = [t for t in triples if t.positive_doc_id not in chosen]
    val = [t for t in triples if t.positive_doc_id in chosen]
    return train, val
