import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import finite_difference, reference_loss
from refine.corpus import Document, Query, TrainingTriple
from refine.encoder import FrozenFeaturizer, TrainableHead
from refine.trainer import (
    TrainConfig,
    TrainingDiverged,
    _pack,
    batch_loss,
    history_to_dict,
    train,
    triple_loss,
)


def rel_err(a, b):
    num = math.sqrt(sum(float(np.sum((a[k] - b[k]) ** 2)) for k in a))
    den = max(math.sqrt(sum(float(np.sum(a[k] ** 2)) for k in a)),
              math.sqrt(sum(float(np.sum(b[k] ** 2)) for k in b)))
    return num / den if den > 1e-12 else num


def random_instance(rng, d, m, nonlinear=False):
    head = TrainableHead(np.eye(d) + 0.3 * rng.normal(size=(d, d)), 0.1 * rng.normal(size=d))
    if nonlinear:
        head.inner_weight = 0.5 * rng.normal(size=(d, d))
        head.inner_bias = 0.1 * rng.normal(size=d)
        head.outer_weight = 0.3 * rng.normal(size=(d, d))
    xq, xp = rng.normal(size=d), rng.normal(size=d)
    xns = [rng.normal(size=d) for _ in range(m)]
    return head, xq, xp, xns


def analytic(head, xq, xp, xns, lam, tau):
    loss, grads = batch_loss(*_pack([xq], [xp], [xns]), head, lam, tau)
    return float(loss[0]), grads


@pytest.mark.parametrize("nonlinear", [False, True])
@pytest.mark.parametrize("lam", [0.0, 0.35, 1.0])
@pytest.mark.parametrize("m", [0, 1, 5])
@pytest.mark.parametrize("d", [4, 8, 16])
def test_gradients_match_finite_differences(d, m, lam, nonlinear):
    rng = np.random.default_rng(d * 100 + m * 10 + int(lam * 7) + nonlinear)
    head, xq, xp, xns = random_instance(rng, d, m, nonlinear)
    # tau = 0.2 keeps the loss off its saturated plateau so the check is informative
    loss, grads = analytic(head, xq, xp, xns, lam, 0.2)
    assert loss == pytest.approx(reference_loss(xq, xp, xns, head.params(), lam, 0.2), abs=1e-12)
    fd = finite_difference(xq, xp, xns, head.params(), lam, 0.2)
    assert rel_err(grads, fd) <= 1e-4


def test_zero_negatives_zero_loss():
    rng = np.random.default_rng(0)
    head, xq, xp, _ = random_instance(rng, 6, 0)
    loss, grads = analytic(head, xq, xp, [], 0.35, 0.05)
    assert loss == 0.0
    assert all(not np.any(g) for g in grads.values())


def test_equal_similarity_is_log_two():
    x = np.array([1.0, 0.0, 0.0])
    loss, _ = analytic(TrainableHead.identity(3), x, np.array([1.0, 1.0, 0.0]), [np.array([1.0, 0.0, 1.0])],
                       0.35, 0.05)
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_lambda_zero_has_no_gradient():
    rng = np.random.default_rng(1)
    head, xq, xp, xns = random_instance(rng, 8, 3)
    _, grads = analytic(head, xq, xp, xns, 0.0, 0.05)
    assert all(not np.any(g) for g in grads.values())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.sampled_from([0.01, 0.05, 0.5]))
def test_loss_bounds(seed, m, tau):
    rng = np.random.default_rng(seed)
    head, xq, xp, xns = random_instance(rng, 5, m)
    loss, _ = analytic(head, xq, xp, xns, 0.35, tau)
    assert 0.0 <= loss <= math.log1p(m * math.exp(2.0 / tau)) + 1e-9


def test_batch_matches_single_triples():
    rng = np.random.default_rng(2)
    head, *_ = random_instance(rng, 6, 0)
    triples = [(rng.normal(size=6), rng.normal(size=6), [rng.normal(size=6) for _ in range(k)]) for k in (0, 2, 5)]
    loss, grads = batch_loss(*_pack(*map(list, zip(*triples))), head, 0.35, 0.05)
    total = {k: np.zeros_like(v) for k, v in grads.items()}
    for i, (q, p, ns) in enumerate(triples):
        li, gi = analytic(head, q, p, ns, 0.35, 0.05)
        assert loss[i] == pytest.approx(li, abs=1e-12)
        for k in total:
            total[k] += gi[k]
    for k in total:
        np.testing.assert_allclose(grads[k], total[k], atol=1e-10)


# --- training loop ----------------------------------------------------------

F = FrozenFeaturizer(32, hash_seed=5)
DOCS = {f"d{i}": f"topic{i} alpha beta gamma shared words number {i}" for i in range(8)}


def toy_triples():
    out = []
    for i in range(8):
        q = Query(f"q{i}", f"what about topic{i}?", source_doc_id=f"d{i}")
        out.append(TrainingTriple(q, f"d{i}", tuple(f"d{j}" for j in range(8) if j != i)[:3]))
    return out


def test_triple_loss_helper():
    t = toy_triples()[0]
    cfg = TrainConfig()
    loss, grads = triple_loss(t.query.text, DOCS["d0"], [DOCS[n] for n in t.negative_doc_ids],
                              TrainableHead.identity(32), F, cfg)
    assert loss > 0 and set(grads) == {"weight", "bias"}


def test_vanilla_returns_identity():
    head, hist = train([], DOCS, TrainConfig(mode="vanilla"), F)
    assert head.equals(TrainableHead.identity(32)) and hist == []


def test_lambda_zero_leaves_head_unchanged():
    head, hist = train(toy_triples(), DOCS, TrainConfig(lam=0.0, epochs=3), F)
    assert head.equals(TrainableHead.identity(32))
    assert all(r.grad_norm == 0.0 for r in hist)


def test_separable_loss_decreases():
    head, hist = train(toy_triples(), DOCS, TrainConfig(mode="finetune", epochs=200, learning_rate=0.05), F)
    assert hist[-1].value < hist[0].value


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=5, seed=3)
    a, ha = train(toy_triples(), DOCS, cfg, F)
    b, hb = train(toy_triples(), DOCS, cfg, F)
    assert a.equals(b)
    assert [r.value for r in ha] == [r.value for r in hb]


def test_validation_loss_recorded():
    ts = toy_triples()
    _, hist = train(ts[:6], DOCS, TrainConfig(epochs=2), F, validation=ts[6:])
    assert all(r.validation is not None for r in hist)
    rec = history_to_dict(hist, TrainConfig(epochs=2))
    assert len(rec["epochs"]) == 2 and rec["config"]["lam"] == 0.35


def test_cocktail_is_merge_of_finetune():
    cfg = TrainConfig(mode="finetune", epochs=3)
    tuned, _ = train(toy_triples(), DOCS, cfg, F)
    mixed, _ = train(toy_triples(), DOCS, TrainConfig(mode="cocktail", epochs=3), F)
    np.testing.assert_allclose(mixed.weight, 0.35 * np.eye(32) + 0.65 * tuned.weight, atol=1e-15)


def test_divergence_raises():
    with pytest.raises(TrainingDiverged):
        train(toy_triples(), DOCS, TrainConfig(mode="finetune", learning_rate=1e300, epochs=5), F)


def test_corpus_as_documents():
    docs = [Document(k, v) for k, v in DOCS.items()]
    a, _ = train(toy_triples(), docs, TrainConfig(epochs=2), F)
    b, _ = train(toy_triples(), DOCS, TrainConfig(epochs=2), F)
    assert a.equals(b)


@pytest.mark.parametrize("kw", [dict(temperature=0), dict(lam=1.5), dict(mode="zero-shot"), dict(epochs=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)
