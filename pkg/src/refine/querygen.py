"""Query generation: a chat-completion LLM client and a seeded offline stand-in."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx
import numpy as np

from .corpus import Document, Query

log = logging.getLogger(__name__)

DEFAULT_PROMPT = (
    "You are a query generator bot. Generate {k} distinct queries from the document "
    "{document}"
)

_TEMPLATES = (
    "what is {span}?",
    "what does the document say about {span}?",
    "how is {span} described?",
    "where does {span} appear?",
    "why is {span} mentioned?",
    "which passage covers {span}?",
    "how does {span} relate to {kw}?",
    "what is said about {kw} and {span}?",
    "who mentions {kw}?",
    "tell me about {kw}",
)

_ITEM = re.compile(r"^\s*(?:\(?\d+[.)]|[-*•])\s+(.*\S)\s*$")


class GenerationError(RuntimeError):
    """The generator produced no usable queries for a document."""


class TransportError(RuntimeError):
    """The LLM endpoint could not be reached after all retries."""


@dataclass(frozen=True)
class GenConfig:
    queries_per_doc: int = 10
    prompt_template: str = DEFAULT_PROMPT
    endpoint: str | None = None
    model_name: str = "gpt-4o-mini"
    request_timeout: float = 60.0
    max_retries: int = 3
    retry_backoff: float = 1.0
    seed: int = 0
    offline: bool = False
    temperature: float = 0.7
    api_key_env: str = "OPENAI_API_KEY"
    parallelism: int = 4

    def __post_init__(self):
        if self.queries_per_doc < 1:
            raise ValueError("queries_per_doc must be at least 1")
        if self.prompt_template.count("{document}") != 1:
            raise ValueError("prompt_template must contain exactly one {document} placeholder")

    def render_prompt(self, doc_text: str) -> str:
        return self.prompt_template.replace("{k}", str(self.queries_per_doc)).replace(
            "{document}", doc_text
        )


def normalize_query(text: str) -> str:
    return " ".join(text.casefold().split())


def parse_numbered_list(raw: str) -> list[str]:
    """Items of a numbered (``1.``, ``1)``) or bulleted (``-``, ``*``) list."""
    items = []
    for line in raw.splitlines():
        m = _ITEM.match(line)
        if m:
            item = m.group(1).strip().strip('"').strip()
            if item:
                items.append(item)
    return items


def _dedupe(candidates, doc: Document, k: int) -> list[str]:
    out, seen = [], set()
    doc_norm = normalize_query(doc.text)
    for c in candidates:
        n = normalize_query(c)
        if not n or n in seen or n == doc_norm:
            continue
        seen.add(n)
        out.append(" ".join(c.split()))
        if len(out) == k:
            break
    return out


def _to_queries(doc: Document, texts: list[str]) -> list[Query]:
    return [Query(f"{doc.id}-q{j}", t, source_doc_id=doc.id) for j, t in enumerate(texts)]


# --- offline --------------------------------------------------------------


def _offline_candidates(text: str, seed: int, k: int):
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng([seed % 2**64, int.from_bytes(digest, "little")])
    sentences = [s.split() for s in re.split(r"(?<=[.!?])\s+", text) if s.split()]
    sentences = [[w.strip(".,;:!?\"'()").lower() for w in s] for s in sentences]
    sentences = [[w for w in s if w] for s in sentences]
    sentences = [s for s in sentences if s] or [[text.strip().lower() or text]]
    words = [w for s in sentences for w in s]
    for _ in range(20 * k):
        s = sentences[rng.integers(len(sentences))]
        n = int(rng.integers(1, min(4, len(s)) + 1))
        start = int(rng.integers(len(s) - n + 1))
        span = " ".join(s[start : start + n])
        kw = words[rng.integers(len(words))]
        yield _TEMPLATES[rng.integers(len(_TEMPLATES))].format(span=span, kw=kw)


def generate_offline(doc: Document, k: int, seed: int) -> list[str]:
    """Seeded spans and keywords of the document dropped into question templates.

    A pure function of (document text, seed, k).
    """
    return _dedupe(_offline_candidates(doc.text, seed, k), doc, k)


# --- LLM ------------------------------------------------------------------


def chat_completion(prompt: str, cfg: GenConfig, client: httpx.Client | None = None) -> str:
    """POST one user message to ``cfg.endpoint`` and return the first choice's content."""
    if not cfg.endpoint:
        raise TransportError("no LLM endpoint configured (use offline mode or set endpoint)")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    own = client is None
    client = client or httpx.Client(timeout=cfg.request_timeout)
    try:
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(min(cfg.retry_backoff * 2.0 ** (attempt - 1), 8.0))
            try:
                resp = client.post(cfg.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GenerationError(f"unexpected response shape: {exc}") from None
        raise TransportError(f"endpoint unreachable after {cfg.max_retries + 1} attempts: {last}")
    finally:
        if own:
            client.close()


def generate_queries(doc: Document, cfg: GenConfig, client: httpx.Client | None = None) -> list[Query]:
    if not doc.text:
        raise GenerationError(f"document {doc.id!r} has no text")
    if cfg.offline:
        texts = generate_offline(doc, cfg.queries_per_doc, cfg.seed)
    else:
        raw = chat_completion(cfg.render_prompt(doc.text), cfg, client)
        texts = _dedupe(parse_numbered_list(raw), doc, cfg.queries_per_doc)
    if not texts:
        raise GenerationError(f"no queries generated for document {doc.id!r}")
    if len(texts) < cfg.queries_per_doc:
        log.warning("document %s: %d of %d queries generated", doc.id, len(texts), cfg.queries_per_doc)
    return _to_queries(doc, texts)


def generate_all(docs: list[Document], cfg: GenConfig, client: httpx.Client | None = None,
                 threads: int | None = None):
    """Generate for every document; returns ``[(doc, queries | exception)]`` in input order."""
    def one(doc):
        try:
            return generate_queries(doc, cfg, client)
        except (GenerationError, TransportError) as exc:
            return exc

    workers = 1 if cfg.offline else max(1, threads or cfg.parallelism)
    if workers == 1:
        return [(d, one(d)) for d in docs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(zip(docs, pool.map(one, docs)))
