"""Synthetic corpora with tunable lexical confusion between documents.

Each document draws its words from a small token set: a ``distractor_overlap``
share of that set comes from a pool shared by all documents, the rest is
private to the document. Every document gets one labelled query built
mostly from the same mix, with at least one private token. At zero
overlap the vocabularies are disjoint and retrieval is trivial; as the
overlap grows, the shared tokens dominate the lexical signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, Query

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthSpec:
    num_docs: int = 100
    vocab_size: int = 4000
    doc_length: tuple[int, int] = (120, 200)
    distractor_overlap: float = 0.5
    seed: int = 0
    tokens_per_doc: int = 20
    shared_pool: int = 25
    query_length: int = 8

    def __post_init__(self):
        if self.num_docs < 1 or self.vocab_size < 1:
            raise ValueError("num_docs and vocab_size must be positive")
        if not 0.0 <= self.distractor_overlap < 1.0:
            raise ValueError("distractor_overlap must lie in [0, 1)")
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ValueError(f"bad doc_length {self.doc_length}")
        if self.query_length < 1 or self.tokens_per_doc < 1:
            raise ValueError("query_length and tokens_per_doc must be positive")

    @property
    def shared_per_doc(self) -> int:
        n = int(round(self.distractor_overlap * self.tokens_per_doc))
        return min(n, self.tokens_per_doc - 1)

    @property
    def private_per_doc(self) -> int:
        return self.tokens_per_doc - self.shared_per_doc


def _vocabulary(n: int, rng: np.random.Generator) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    attempts = 0
    while len(words) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise ValueError(f"could not draw {n} distinct tokens")
        syl = int(rng.integers(2, 5))
        w = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syl)
        )
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _sentences(words: list[str], rng: np.random.Generator) -> str:
    out, i = [], 0
    while i < len(words):
        n = int(rng.integers(8, 15))
        chunk = words[i : i + n]
        out.append(chunk[0].capitalize() + (" " + " ".join(chunk[1:]) if len(chunk) > 1 else "") + ".")
        i += n
    return " ".join(out)


def generate_corpus(spec: SynthSpec) -> tuple[list[Document], list[Query]]:
    n_shared, n_private = spec.shared_per_doc, spec.private_per_doc
    pool = spec.shared_pool if n_shared else 0
    if pool < n_shared:
        raise ValueError(f"shared_pool={spec.shared_pool} smaller than {n_shared} shared tokens per doc")
    needed = pool + spec.num_docs * n_private
    if needed > spec.vocab_size:
        raise ValueError(
            f"vocab_size={spec.vocab_size} too small: this overlap structure needs {needed} tokens"
        )
    rng = np.random.default_rng(spec.seed)
    vocab = _vocabulary(needed, rng)
    shared = vocab[:pool]
    width = len(str(spec.num_docs - 1))

    docs, queries = [], []
    for i in range(spec.num_docs):
        private = vocab[pool + i * n_private : pool + (i + 1) * n_private]
        mine = [shared[j] for j in rng.choice(pool, size=n_shared, replace=False)] if n_shared else []
        tokens = private + mine
        length = int(rng.integers(spec.doc_length[0], spec.doc_length[1] + 1))
        # every private token appears at least once
        body = list(private) + [tokens[j] for j in rng.integers(len(tokens), size=max(0, length - n_private))]
        rng.shuffle(body)
        doc_id = f"doc{i:0{width}d}"
        docs.append(Document(doc_id, _sentences(body, rng)))

        n_q_private = max(1, int(round((1.0 - spec.distractor_overlap) * spec.query_length)))
        q_words = [private[j] for j in rng.integers(n_private, size=n_q_private)]
        if n_shared:
            q_words += [mine[j] for j in rng.integers(n_shared, size=spec.query_length - n_q_private)]
        rng.shuffle(q_words)
        queries.append(
            Query(f"q{i:0{width}d}", " ".join(q_words) + "?", gold_doc_ids=frozenset({doc_id}))
        )
    return docs, queries
