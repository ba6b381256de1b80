"""Exact cosine top-k search over an in-memory document matrix."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .corpus import Document, atomic_write_text

SNAPSHOT_MAGIC = b"RVS1"


class VectorStoreError(ValueError):
    pass


def cosine(a, b) -> float:
    """Cosine similarity; raises on a zero-norm operand."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise VectorStoreError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        raise VectorStoreError("cosine of a zero-norm vector is undefined")
    return float(a @ b) / (na * nb)


@dataclass(frozen=True)
class RetrievalResult:
    doc_id: str
    score: float


class VectorStore:
    """Immutable mapping doc_id -> embedding, searched by brute force.

    Safe to search concurrently; nothing is mutated after construction.
    """

    def __init__(self, ids: Iterable[str], vectors):
        ids = list(ids)
        mat = np.array(vectors, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(ids):
            raise VectorStoreError("expected one row per document id")
        if mat.shape[0] == 0 or mat.shape[1] == 0:
            raise VectorStoreError("store must hold at least one non-empty vector")
        seen = set()
        for i in ids:
            if i in seen:
                raise VectorStoreError(f"duplicate document id {i!r}")
            seen.add(i)
        if not np.all(np.isfinite(mat)):
            raise VectorStoreError("embeddings must be finite")
        norms = np.sqrt(np.einsum("ij,ij->i", mat, mat))
        if np.any(norms == 0.0):
            bad = ids[int(np.argmin(norms))]
            raise VectorStoreError(f"zero-norm embedding for document {bad!r}")
        mat.setflags(write=False)
        self._ids = ids
        # rank of each id in lexicographic order, used as the tie-break key
        order = sorted(range(len(ids)), key=ids.__getitem__)
        self._lex_rank = np.empty(len(ids), dtype=np.int64)
        self._lex_rank[order] = np.arange(len(ids))
        self._index = {d: i for i, d in enumerate(ids)}
        self._mat = mat
        self._norms = norms

    @property
    def dimension(self) -> int:
        return self._mat.shape[1]

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, doc_id) -> bool:
        return doc_id in self._index

    def vector(self, doc_id: str) -> np.ndarray:
        return self._mat[self._index[doc_id]]

    def scores(self, query_vec) -> np.ndarray:
        """Cosine similarity of ``query_vec`` against every entry, in store order."""
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise VectorStoreError(
                f"query dimension {q.shape} does not match store dimension {self.dimension}"
            )
        qn = float(np.sqrt(q @ q))
        if qn == 0.0 or not np.isfinite(qn):
            raise VectorStoreError("query vector must be finite with positive norm")
        return (self._mat @ q) / (self._norms * qn)

    def search(self, query_vec, top_k: int) -> list[RetrievalResult]:
        if top_k < 1:
            raise VectorStoreError(f"top_k must be positive, got {top_k}")
        s = self.scores(query_vec)
        k = min(top_k, len(s))
        if k < len(s):
            # keep every entry tied with the k-th score so the tie-break sees them all
            kth = np.partition(-s, k - 1)[k - 1]
            cand = np.flatnonzero(-s <= kth)
        else:
            cand = np.arange(len(s))
        order = cand[np.lexsort((self._lex_rank[cand], -s[cand]))][:k]
        return [RetrievalResult(self._ids[i], float(s[i])) for i in order]

    # --- persistence ------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Little-endian snapshot: magic, u32 dimension, u32 count, then per
        entry a u32 byte length, the UTF-8 id, and ``dimension`` f64 values."""
        out = [SNAPSHOT_MAGIC, struct.pack("<II", self.dimension, len(self))]
        for i, doc_id in enumerate(self._ids):
            raw = doc_id.encode("utf-8")
            out.append(struct.pack("<I", len(raw)))
            out.append(raw)
            out.append(self._mat[i].astype("<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "VectorStore":
        if blob[:4] != SNAPSHOT_MAGIC:
            raise VectorStoreError("not a vector store snapshot")
        dim, count = struct.unpack_from("<II", blob, 4)
        pos = 12
        ids, rows = [], []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            ids.append(blob[pos : pos + n].decode("utf-8"))
            pos += n
            rows.append(np.frombuffer(blob, dtype="<f8", count=dim, offset=pos))
            pos += 8 * dim
        if pos != len(blob):
            raise VectorStoreError("trailing bytes in snapshot")
        return cls(ids, np.array(rows).reshape(count, dim))

    def save(self, path, debug_json: bool = True) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)
        if debug_json:
            dump = {
                "dimension": self.dimension,
                "count": len(self),
                "entries": [
                    {"id": d, "vector": self._mat[i].tolist()} for i, d in enumerate(self._ids)
                ],
            }
            atomic_write_text(path.with_suffix(".json"), json.dumps(dump) + "\n")

    @classmethod
    def load(cls, path) -> "VectorStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def ingest(docs: list[Document], embed: Callable[[str], np.ndarray]) -> VectorStore:
    if not docs:
        raise VectorStoreError("cannot ingest an empty document list")
    ids, rows = [], []
    seen = set()
    dim = None
    for d in docs:
        if d.id in seen:
            raise VectorStoreError(f"document {d.id!r} ingested twice")
        seen.add(d.id)
        v = np.asarray(embed(d.text), dtype=np.float64)
        if dim is None:
            dim = v.shape
        elif v.shape != dim:
            raise VectorStoreError(
                f"document {d.id!r} embedded to shape {v.shape}, expected {dim}"
            )
        ids.append(d.id)
        rows.append(v)
    return VectorStore(ids, np.stack(rows))


def search(store: VectorStore, query_vec, top_k: int) -> list[RetrievalResult]:
    return store.search(query_vec, top_k)
