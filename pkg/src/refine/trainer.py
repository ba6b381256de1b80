"""Contrastive fine-tuning of the trainable head through the fused embedding.

For a triple (q, d+, D-) every text is embedded as
``e = lam * head(x) + (1 - lam) * x`` with ``x`` the frozen feature, and
the per-triple loss is

    L = -log( exp(s+ / tau) / (exp(s+ / tau) + sum_i exp(s-_i / tau)) )

with ``s`` the cosine similarity between the query and each document
embedding. Gradients are derived by hand (softmax -> cosine quotient rule
-> fusion -> head) and checked against finite differences in the tests.
Optimisation is plain SGD with gradient accumulation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import Document, TrainingTriple
from .encoder import FrozenFeaturizer, TrainableHead, featurize, merge_weights

log = logging.getLogger(__name__)

MODES = ("vanilla", "finetune", "refine", "cocktail")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"loss became non-finite at update step {step}{': ' + detail if detail else ''}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    # 1e-5 is the transformer-scale rate; the desk-scale linear head needs a far larger one
    learning_rate: float = 0.1
    temperature: float = 0.05
    lam: float = 0.35
    grad_accum_steps: int = 4
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    mode: str = "refine"
    cocktail_weight: float = 0.65
    nonlinear: bool = False
    hidden: int | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.grad_accum_steps < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("grad_accum_steps, epochs and batch_size must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.cocktail_weight <= 1.0:
            raise ValueError("cocktail_weight must lie in [0, 1]")

    @property
    def train_lambda(self) -> float:
        """Fusion weight used while training in this mode."""
        return self.lam if self.mode == "refine" else 1.0

    @property
    def inference_lambda(self) -> float:
        """Fusion weight to embed with at evaluation time."""
        return self.lam if self.mode == "refine" else 1.0


@dataclass
class LossReport:
    value: float
    grad_norm: float
    per_triple: list[float] = field(default_factory=list)
    validation: float | None = None


def batch_loss(xq: np.ndarray, xp: np.ndarray, xn: np.ndarray, mask: np.ndarray,
               head: TrainableHead, lam: float, tau: float) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-triple losses and the gradient of their *sum* w.r.t. every head parameter.

    xq, xp: (B, d) frozen features; xn: (B, M, d); mask: (B, M), True for
    real negatives. Padded negative rows must still have nonzero norm.
    """
    B, d = xq.shape
    M = xn.shape[1]
    X = np.concatenate([xq, xp, xn.reshape(B * M, d)], axis=0)
    T = X @ head.weight.T + head.bias
    if head.nonlinear:
        H = np.tanh(X @ head.inner_weight.T + head.inner_bias)
        T = T + H @ head.outer_weight.T
    E = T if lam == 1.0 else X + lam * (T - X)

    eq, ep, en = E[:B], E[B : 2 * B], E[2 * B :].reshape(B, M, d)
    nq = np.sqrt(np.einsum("bd,bd->b", eq, eq))
    np_ = np.sqrt(np.einsum("bd,bd->b", ep, ep))
    nn = np.sqrt(np.einsum("bmd,bmd->bm", en, en))
    if np.any(nq == 0) or np.any(np_ == 0) or np.any(nn == 0):
        raise FloatingPointError("zero-norm fused embedding")
    sp = np.einsum("bd,bd->b", eq, ep) / (nq * np_)
    sn = np.einsum("bd,bmd->bm", eq, en) / (nq[:, None] * nn)

    z = np.concatenate([sp[:, None], sn], axis=1) / tau
    valid = np.concatenate([np.ones((B, 1), dtype=bool), mask], axis=1)
    z = np.where(valid, z, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.where(valid, np.exp(z - zmax), 0.0)
    se = ez.sum(axis=1, keepdims=True)
    rest = ez[:, 1:].sum(axis=1)
    # when the positive wins, log1p and 1 - p0 = rest / se avoid cancellation near zero loss
    pos_wins = z[:, 0] >= zmax[:, 0]
    loss = np.where(pos_wins, np.log1p(rest), zmax[:, 0] + np.log(se[:, 0]) - z[:, 0])

    # dL/ds = (softmax - onehot) / tau
    g = ez / se
    g[:, 0] = -rest / se[:, 0]
    a0, an = g[:, 0] / tau, g[:, 1:] / tau

    inv_q = 1.0 / nq
    gq = (a0 * inv_q / np_)[:, None] * ep - (a0 * sp * inv_q**2)[:, None] * eq
    gq += np.einsum("bm,bmd->bd", an * inv_q[:, None] / nn, en)
    gq -= (an * sn).sum(axis=1)[:, None] * (inv_q**2)[:, None] * eq
    gp = (a0 * inv_q / np_)[:, None] * eq - (a0 * sp / np_**2)[:, None] * ep
    gn = (an * inv_q[:, None] / nn)[:, :, None] * eq[:, None, :] - (an * sn / nn**2)[:, :, None] * en

    dT = np.concatenate([gq, gp, gn.reshape(B * M, d)], axis=0)
    if lam != 1.0:
        dT = lam * dT
    grads = {"weight": dT.T @ X, "bias": dT.sum(axis=0)}
    if head.nonlinear:
        grads["outer_weight"] = dT.T @ H
        dA = (dT @ head.outer_weight) * (1.0 - H * H)
        grads["inner_weight"] = dA.T @ X
        grads["inner_bias"] = dA.sum(axis=0)
    return loss, grads


def _pack(frozen: list[np.ndarray], pos: list[np.ndarray], negs: list[list[np.ndarray]]):
    B, d = len(frozen), frozen[0].shape[0]
    M = max((len(n) for n in negs), default=0)
    xn = np.empty((B, M, d))
    mask = np.zeros((B, M), dtype=bool)
    for b, ns in enumerate(negs):
        for j in range(M):
            if j < len(ns):
                xn[b, j] = ns[j]
                mask[b, j] = True
            else:
                xn[b, j] = pos[b]
    return np.stack(frozen), np.stack(pos), xn, mask


def triple_loss(q_text: str, pos_text: str, neg_texts, head: TrainableHead,
                f: FrozenFeaturizer, cfg: TrainConfig, lam: float | None = None):
    """Loss of one triple and its gradients, keyed by head parameter name."""
    lam = cfg.train_lambda if lam is None else lam
    xq, xp, xn, mask = _pack(
        [featurize(q_text, f)], [featurize(pos_text, f)], [[featurize(t, f) for t in neg_texts]]
    )
    with np.errstate(over="raise", invalid="raise"):
        loss, grads = batch_loss(xq, xp, xn, mask, head, lam, cfg.temperature)
    if not np.isfinite(loss[0]):
        raise FloatingPointError("non-finite triple loss")
    return float(loss[0]), grads


class _Features:
    """Frozen features for every text a training run touches, computed once."""

    def __init__(self, f: FrozenFeaturizer, docs: dict[str, str]):
        self.f = f
        self.docs = {k: featurize(v, f) for k, v in docs.items()}
        self.queries: dict[str, np.ndarray] = {}

    def query(self, text: str) -> np.ndarray:
        v = self.queries.get(text)
        if v is None:
            v = self.queries[text] = featurize(text, self.f)
        return v

    def batch(self, triples: list[TrainingTriple]):
        return _pack(
            [self.query(t.query.text) for t in triples],
            [self.docs[t.positive_doc_id] for t in triples],
            [[self.docs[n] for n in t.negative_doc_ids] for t in triples],
        )


def _mean_loss(triples, feats: _Features, head, lam, tau, chunk=256) -> float:
    total = 0.0
    for i in range(0, len(triples), chunk):
        loss, _ = batch_loss(*feats.batch(triples[i : i + chunk]), head, lam, tau)
        total += float(loss.sum())
    return total / len(triples)


def _as_doc_texts(corpus) -> dict[str, str]:
    if isinstance(corpus, dict):
        return dict(corpus)
    return {d.id: d.text for d in corpus}


def train(triples: list[TrainingTriple], corpus: list[Document] | dict[str, str],
          cfg: TrainConfig, featurizer: FrozenFeaturizer,
          validation: list[TrainingTriple] | None = None) -> tuple[TrainableHead, list[LossReport]]:
    """Fit a head for ``cfg.mode``; returns the head to embed with and per-epoch history.

    vanilla returns the identity head untouched; cocktail fine-tunes at
    lam = 1 and then merges the result with the identity head.
    """
    d = featurizer.dimension
    init = TrainableHead.identity(d, nonlinear=cfg.nonlinear, hidden=cfg.hidden, seed=cfg.seed)
    if cfg.mode == "vanilla":
        return init, []
    if not triples:
        raise ValueError("training needs at least one triple")

    lam = cfg.train_lambda
    tau = cfg.temperature
    feats = _Features(featurizer, _as_doc_texts(corpus))
    head = init.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(triples)
    history: list[LossReport] = []
    step = 0

    for epoch in range(cfg.epochs):
        per_triple = np.empty(n)
        norms = []
        acc = {k: np.zeros_like(v) for k, v in head.params().items()}
        acc_count = acc_batches = 0
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                try:
                    loss, grads = batch_loss(*feats.batch([triples[i] for i in idx]), head, lam, tau)
                except FloatingPointError as exc:
                    raise TrainingDiverged(step, str(exc)) from None
            if not np.all(np.isfinite(loss)):
                raise TrainingDiverged(step)
            per_triple[idx] = loss
            for k in acc:
                acc[k] += grads[k]
            acc_count += len(idx)
            acc_batches += 1
            if acc_batches == cfg.grad_accum_steps or start + cfg.batch_size >= n:
                norms.append(_apply(head, acc, acc_count, cfg.learning_rate, step))
                step += 1
                acc = {k: np.zeros_like(v) for k, v in acc.items()}
                acc_count = acc_batches = 0

        rep = LossReport(float(per_triple.mean()), float(np.mean(norms)), per_triple.tolist())
        if validation:
            rep.validation = _mean_loss(validation, feats, head, lam, tau)
        history.append(rep)
        log.debug("epoch %d loss %.6f val %s", epoch, rep.value, rep.validation)

    if cfg.mode == "cocktail":
        head = merge_weights(init, head, cfg.cocktail_weight)
    return head, history


def _apply(head: TrainableHead, acc: dict, count: int, lr: float, step: int) -> float:
    sq = 0.0
    for k, g in acc.items():
        g = g / count
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(step, f"non-finite gradient for {k}")
        sq += float(np.sum(g * g))
        setattr(head, k, getattr(head, k) - lr * g)
    return float(np.sqrt(sq))


def history_to_dict(history: list[LossReport], cfg: TrainConfig) -> dict:
    return {
        "config": asdict(cfg),
        "epochs": [
            {
                "epoch": i,
                "loss": r.value,
                "grad_norm": r.grad_norm,
                "validation_loss": r.validation,
            }
            for i, r in enumerate(history)
        ],
    }
