"""Slow, obvious reference implementations used as test oracles."""

import math

import numpy as np


# --- retrieval ------------------------------------------------------------


def score_store(scores, ids=None):
    """Store whose i-th document has cosine scores[i] with the returned query e0."""
    from refine.vectorstore import VectorStore

    n = len(scores)
    ids = ids or [f"s{int(round(s * 100)):03d}" for s in scores]
    mat = np.zeros((n, n + 1))
    for i, s in enumerate(scores):
        mat[i, 0] = s
        mat[i, i + 1] = math.sqrt(1 - s * s)
    q = np.zeros(n + 1)
    q[0] = 1.0
    return VectorStore(ids, mat), q


def mining_oracle(store, q, positive, cfg):
    """Enumerate every document and apply the negative filter clauses literally."""
    ranked = full_sort(store.ids, store.scores(q).tolist(), len(store))
    m = cfg.negatives_per_query
    picked = [d for rank, (d, s) in enumerate(ranked, start=1)
              if cfg.exclude_top < rank <= cfg.retrieve_depth
              and cfg.band_low <= s <= cfg.band_high and d != positive][:m]
    if picked:
        return picked, False
    lo, hi = cfg.fallback_rank_window
    return [d for rank, (d, s) in enumerate(ranked, start=1) if lo <= rank <= hi and d != positive][:m], True


def full_sort(ids, scores, k):
    """Every document sorted by (-score, id); the first k."""
    return sorted(zip(ids, scores), key=lambda p: (-p[1], p[0]))[:k]


# --- metrics (binary relevance) -------------------------------------------


def ap_oracle(ranked, relevant, k):
    top = ranked[:k]
    precisions = []
    for i in range(len(top)):
        if top[i] in relevant:
            prefix = top[: i + 1]
            precisions.append(sum(1 for d in prefix if d in relevant) / len(prefix))
    return sum(precisions) / len(relevant)


def ndcg_oracle(ranked, relevant, k):
    gains = [1.0 if d in relevant else 0.0 for d in ranked[:k]]
    dcg = sum(g / math.log2(i + 2) for i, g in enumerate(gains))
    ideal_gains = sorted([1.0] * len(relevant) + [0.0] * k, reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal_gains))
    return dcg / idcg


def mrr_oracle(ranked, relevant, k):
    ranks = [i + 1 for i, d in enumerate(ranked[:k]) if d in relevant]
    return 1.0 / min(ranks) if ranks else 0.0


def recall_oracle(ranked, relevant, k):
    return sum(1 for d in relevant if d in ranked[:k]) / len(relevant)


ORACLES = {"map": ap_oracle, "ndcg": ndcg_oracle, "mrr": mrr_oracle, "recall": recall_oracle}


# --- contrastive loss -----------------------------------------------------


def reference_embed(x, params, lam):
    """lam * head(x) + (1 - lam) * x for a single vector."""
    t = params["weight"] @ x + params["bias"]
    if "outer_weight" in params:
        h = np.tanh(params["inner_weight"] @ x + params["inner_bias"])
        t = t + params["outer_weight"] @ h
    return lam * t + (1.0 - lam) * x


def _cos(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def reference_loss(xq, xp, xns, params, lam, tau):
    # -log(p / (p + sum n)) written as log1p(sum n / p) so tiny losses keep their digits
    eq = reference_embed(xq, params, lam)
    sp = _cos(eq, reference_embed(xp, params, lam))
    return math.log1p(sum(math.exp((_cos(eq, reference_embed(xn, params, lam)) - sp) / tau) for xn in xns))


def finite_difference(xq, xp, xns, params, lam, tau, h=1e-6):
    """Central differences of reference_loss with respect to every parameter entry."""
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = reference_loss(xq, xp, xns, params, lam, tau)
            arr[idx] = orig - h
            down = reference_loss(xq, xp, xns, params, lam, tau)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads
