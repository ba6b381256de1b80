"""Frozen featurizer, trainable head, and embedding fusion.

The frozen "pretrained" model is a hashed character n-gram featurizer:
words are padded as ``<word>``, every n-gram in ``ngram_range`` is hashed
with a keyed BLAKE2b into one of ``dimension`` buckets, and the count
vector is L2-normalised. Counts are unsigned, so any non-empty text maps
to a vector with positive norm.

The trainable model is that featurizer followed by an affine head
initialised to the identity, optionally with a residual tanh branch whose
output layer starts at zero. Both start out equal to the frozen model.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .corpus import atomic_write_text

_WORD = re.compile(r"\w+", re.UNICODE)


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class FrozenFeaturizer:
    dimension: int = 256
    hash_seed: int = 0
    ngram_range: tuple[int, int] = (3, 5)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = self.ngram_range
        if self.dimension < 1:
            raise EncoderError("dimension must be positive")
        if not 1 <= lo <= hi:
            raise EncoderError(f"bad ngram_range {self.ngram_range}")
        object.__setattr__(self, "ngram_range", (int(lo), int(hi)))
        object.__setattr__(
            self, "_key", (self.hash_seed % 2**64).to_bytes(8, "little")
        )

    def _bucket(self, gram: str) -> int:
        h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key)
        return int.from_bytes(h.digest(), "little") % self.dimension

    def _word_buckets(self, word: str) -> tuple[int, ...]:
        hit = self._cache.get(word)
        if hit is None:
            padded = f"<{word}>"
            lo, hi = self.ngram_range
            grams = [
                padded[i : i + n]
                for n in range(lo, hi + 1)
                for i in range(len(padded) - n + 1)
            ]
            if not grams:
                # shorter than the smallest n-gram even after padding
                grams = [padded]
            hit = tuple(self._bucket(g) for g in grams)
            self._cache[word] = hit
        return hit

    def __call__(self, text: str) -> np.ndarray:
        return featurize(text, self)

    def many(self, texts) -> np.ndarray:
        return np.stack([featurize(t, self) for t in texts]) if len(texts) else np.zeros(
            (0, self.dimension)
        )


def featurize(text: str, f: FrozenFeaturizer) -> np.ndarray:
    if not text:
        raise EncoderError("cannot featurize empty text")
    words = _WORD.findall(text.lower()) or [text]
    counts = np.zeros(f.dimension, dtype=np.float64)
    for w in words:
        np.add.at(counts, list(f._word_buckets(w)), 1.0)
    return counts / np.sqrt(counts @ counts)


@dataclass
class TrainableHead:
    """Affine map ``W x + b`` plus an optional ``V tanh(U x + c)`` branch."""

    weight: np.ndarray
    bias: np.ndarray
    inner_weight: np.ndarray | None = None
    inner_bias: np.ndarray | None = None
    outer_weight: np.ndarray | None = None

    PARAMS = ("weight", "bias", "inner_weight", "inner_bias", "outer_weight")

    def __post_init__(self):
        d = self.bias.shape[0]
        if self.weight.shape != (d, d):
            raise EncoderError(f"weight shape {self.weight.shape} does not match bias ({d},)")
        branch = [self.inner_weight, self.inner_bias, self.outer_weight]
        if any(p is None for p in branch) and not all(p is None for p in branch):
            raise EncoderError("the tanh branch needs all three of its parameters")
        for name, p in self.params().items():
            if not np.all(np.isfinite(p)):
                raise EncoderError(f"non-finite entries in {name}")

    @classmethod
    def identity(cls, dimension: int, nonlinear: bool = False, hidden: int | None = None,
                 seed: int = 0, init_scale: float = 0.1) -> "TrainableHead":
        head = cls(np.eye(dimension), np.zeros(dimension))
        if nonlinear:
            h = hidden or dimension
            rng = np.random.default_rng(seed)
            head.inner_weight = rng.normal(0.0, init_scale, size=(h, dimension))
            head.inner_bias = np.zeros(h)
            head.outer_weight = np.zeros((dimension, h))
        return head

    @property
    def dimension(self) -> int:
        return self.bias.shape[0]

    @property
    def nonlinear(self) -> bool:
        return self.outer_weight is not None

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS if getattr(self, k) is not None}

    def copy(self) -> "TrainableHead":
        return TrainableHead(**{k: v.copy() for k, v in self.params().items()})

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Head output for one vector ``(d,)`` or a batch ``(n, d)``."""
        out = x @ self.weight.T + self.bias
        if self.nonlinear:
            out = out + np.tanh(x @ self.inner_weight.T + self.inner_bias) @ self.outer_weight.T
        return out

    def equals(self, other: "TrainableHead") -> bool:
        a, b = self.params(), other.params()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def encode_trainable(text: str, f: FrozenFeaturizer, head: TrainableHead) -> np.ndarray:
    return head.apply(featurize(text, f))


@dataclass(frozen=True)
class FusionConfig:
    lam: float = 0.35

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise EncoderError(f"fusion weight must lie in [0, 1], got {self.lam}")


def fuse(e_train, e_frozen, lam) -> np.ndarray:
    """``lam * e_train + (1 - lam) * e_frozen``, exact at both endpoints."""
    if isinstance(lam, FusionConfig):
        lam = lam.lam
    FusionConfig(lam)
    e_train = np.asarray(e_train, dtype=np.float64)
    e_frozen = np.asarray(e_frozen, dtype=np.float64)
    if e_train.shape != e_frozen.shape:
        raise EncoderError(f"cannot fuse shapes {e_train.shape} and {e_frozen.shape}")
    if lam == 1.0:
        return e_train.copy()
    # written as an offset from e_frozen so that equal operands fuse to themselves bit-exactly
    return e_frozen + lam * (e_train - e_frozen)


def merge_weights(a: TrainableHead, b: TrainableHead, w: float) -> TrainableHead:
    """Parameter-wise ``(1 - w) * a + w * b``."""
    if not 0.0 <= w <= 1.0:
        raise EncoderError(f"merge weight must lie in [0, 1], got {w}")
    pa, pb = a.params(), b.params()
    if pa.keys() != pb.keys() or any(pa[k].shape != pb[k].shape for k in pa):
        raise EncoderError("cannot merge heads of different shapes")
    if w == 0.0:
        return a.copy()
    if w == 1.0:
        return b.copy()
    return TrainableHead(**{k: (1.0 - w) * pa[k] + w * pb[k] for k in pa})


class Encoder:
    """Text -> embedding under a given head and fusion weight.

    ``head=None`` is the vanilla frozen model.
    """

    def __init__(self, featurizer: FrozenFeaturizer, head: TrainableHead | None = None,
                 lam: float = 1.0):
        FusionConfig(lam)
        self.featurizer = featurizer
        self.head = head
        self.lam = lam

    def embed_frozen(self, frozen: np.ndarray) -> np.ndarray:
        if self.head is None:
            return frozen
        return fuse(self.head.apply(frozen), frozen, self.lam)

    def __call__(self, text: str) -> np.ndarray:
        return self.embed_frozen(featurize(text, self.featurizer))

    def many(self, texts) -> np.ndarray:
        return self.embed_frozen(self.featurizer.many(texts))


# --- checkpoints ----------------------------------------------------------


def head_to_dict(head: TrainableHead, **meta) -> dict:
    rec = {"dimension": head.dimension}
    rec.update(meta)
    rec["weight"] = head.weight.ravel(order="C").tolist()
    rec["bias"] = head.bias.tolist()
    if head.nonlinear:
        rec["hidden"] = head.inner_weight.shape[0]
        rec["inner_weight"] = head.inner_weight.ravel(order="C").tolist()
        rec["inner_bias"] = head.inner_bias.tolist()
        rec["outer_weight"] = head.outer_weight.ravel(order="C").tolist()
    return rec


def head_from_dict(rec: dict) -> TrainableHead:
    d = int(rec["dimension"])
    head = TrainableHead(
        np.array(rec["weight"], dtype=np.float64).reshape(d, d),
        np.array(rec["bias"], dtype=np.float64),
    )
    if "outer_weight" in rec:
        h = int(rec["hidden"])
        head = TrainableHead(
            head.weight, head.bias,
            np.array(rec["inner_weight"], dtype=np.float64).reshape(h, d),
            np.array(rec["inner_bias"], dtype=np.float64),
            np.array(rec["outer_weight"], dtype=np.float64).reshape(d, h),
        )
    return head


def save_head(path, head: TrainableHead, **meta) -> None:
    """Write a JSON checkpoint: dimension, row-major weight, bias, plus ``meta``."""
    atomic_write_text(path, json.dumps(head_to_dict(head, **meta)) + "\n")


def load_head(path) -> tuple[TrainableHead, dict]:
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    meta = {k: v for k, v in rec.items()
            if k not in {"weight", "bias", "inner_weight", "inner_bias", "outer_weight"}}
    return head_from_dict(rec), meta
