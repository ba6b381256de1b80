import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refine.encoder import (
    Encoder,
    EncoderError,
    FrozenFeaturizer,
    FusionConfig,
    TrainableHead,
    encode_trainable,
    featurize,
    fuse,
    load_head,
    merge_weights,
    save_head,
)
from refine.vectorstore import cosine

F64 = FrozenFeaturizer(64, hash_seed=11)


def test_featurize_is_pure():
    a = featurize("the quick brown fox", F64)
    b = featurize("the quick brown fox", FrozenFeaturizer(64, hash_seed=11))
    assert np.array_equal(a, b)


def test_hash_seed_changes_buckets():
    assert not np.array_equal(featurize("the quick brown fox", F64),
                              featurize("the quick brown fox", FrozenFeaturizer(64, hash_seed=12)))


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=1, max_size=40))
def test_featurize_unit_norm(text):
    v = featurize(text, F64)
    assert v.shape == (64,) and np.all(np.isfinite(v))
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-9


def test_disjoint_texts_differ():
    assert cosine(featurize("abc", F64), featurize("xyz", F64)) < 1.0


def test_short_and_symbol_texts_have_norm():
    for text in ("a", "?", " ", "!!"):
        assert np.linalg.norm(featurize(text, F64)) == pytest.approx(1.0)


def test_featurize_empty():
    with pytest.raises(EncoderError):
        featurize("", F64)


def test_identity_head_equals_frozen():
    head = TrainableHead.identity(64)
    assert np.array_equal(encode_trainable("hello world", F64, head), featurize("hello world", F64))


def test_scaled_head_is_linear():
    head = TrainableHead(2.0 * np.eye(64), np.zeros(64))
    np.testing.assert_array_equal(encode_trainable("hello", F64, head), 2.0 * featurize("hello", F64))


def test_random_head_matches_reference_multiply():
    rng = np.random.default_rng(0)
    W, b = rng.normal(size=(64, 64)), rng.normal(size=64)
    x = featurize("some random text", F64)
    expected = [sum(W[i, j] * x[j] for j in range(64)) + b[i] for i in range(64)]
    np.testing.assert_allclose(encode_trainable("some random text", F64, TrainableHead(W, b)), expected,
                               rtol=1e-12, atol=1e-12)


def test_fuse_endpoints_and_default_weight():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert np.array_equal(fuse(a, b, 0.0), b)
    assert np.array_equal(fuse(a, b, 1.0), a)
    np.testing.assert_allclose(fuse(a, b, 0.35), [0.35, 0.65], atol=1e-15)
    np.testing.assert_allclose(fuse(a, b, FusionConfig(0.35)), [0.35, 0.65], atol=1e-15)


def test_fuse_errors():
    with pytest.raises(EncoderError):
        fuse(np.ones(2), np.ones(3), 0.5)
    with pytest.raises(EncoderError):
        FusionConfig(1.2)


vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@settings(max_examples=100, deadline=None)
@given(vecs, vecs, st.floats(0, 1))
def test_fuse_symmetry_and_affinity(a, b, lam):
    np.testing.assert_allclose(fuse(a, b, lam), fuse(b, a, 1 - lam), atol=1e-12)
    np.testing.assert_allclose(fuse(a, b, lam), lam * a + (1 - lam) * b, atol=1e-12)


def test_merge_endpoints_and_weighting():
    rng = np.random.default_rng(2)
    ident = TrainableHead.identity(4)
    tuned = TrainableHead(rng.normal(size=(4, 4)), rng.normal(size=4))
    assert merge_weights(ident, tuned, 1.0).equals(tuned)
    assert merge_weights(ident, tuned, 0.0).equals(ident)
    m = merge_weights(ident, tuned, 0.65)
    np.testing.assert_allclose(m.weight, 0.35 * np.eye(4) + 0.65 * tuned.weight, atol=1e-15)
    np.testing.assert_allclose(m.bias, 0.65 * tuned.bias, atol=1e-15)


def test_merge_shape_mismatch():
    with pytest.raises(EncoderError):
        merge_weights(TrainableHead.identity(3), TrainableHead.identity(4), 0.5)


@pytest.mark.parametrize("lam", [0.0, 0.35, 1.0])
def test_identity_at_init(lam):
    enc = Encoder(F64, TrainableHead.identity(64), lam)
    for text in ("alpha beta", "gamma", "what is delta?"):
        assert np.array_equal(enc(text), featurize(text, F64))


def test_merge_equals_fusion_for_linear_head():
    rng = np.random.default_rng(3)
    tuned = TrainableHead(np.eye(64) + 0.1 * rng.normal(size=(64, 64)), 0.05 * rng.normal(size=64))
    merged = Encoder(F64, merge_weights(TrainableHead.identity(64), tuned, 0.65), 1.0)
    fused = Encoder(F64, tuned, 0.65)
    for text in ("one two three", "four", "five six"):
        np.testing.assert_allclose(merged(text), fused(text), atol=1e-12, rtol=0)


def test_merge_differs_from_fusion_for_nonlinear_head():
    rng = np.random.default_rng(4)
    tuned = TrainableHead.identity(16, nonlinear=True, seed=1, init_scale=1.0)
    tuned.outer_weight = rng.normal(size=(16, 16))
    tuned.inner_bias = rng.normal(size=16)
    base = TrainableHead.identity(16, nonlinear=True, seed=1, init_scale=1.0)
    f = FrozenFeaturizer(16, hash_seed=3)
    merged = Encoder(f, merge_weights(base, tuned, 0.65), 1.0)("some text here")
    fused = Encoder(f, tuned, 0.65)("some text here")
    assert np.max(np.abs(merged - fused)) > 1e-3


def test_nonlinear_identity_at_init():
    head = TrainableHead.identity(16, nonlinear=True, seed=0)
    x = featurize("x y z", FrozenFeaturizer(16))
    assert np.array_equal(head.apply(x), x)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    head = TrainableHead(rng.normal(size=(8, 8)), rng.normal(size=8))
    save_head(tmp_path / "h.json", head, lam=0.35, mode="refine", config_hash="abc")
    back, meta = load_head(tmp_path / "h.json")
    assert back.equals(head)
    assert meta == {"dimension": 8, "lam": 0.35, "mode": "refine", "config_hash": "abc"}

    nl = TrainableHead.identity(8, nonlinear=True, hidden=5, seed=2)
    save_head(tmp_path / "n.json", nl)
    assert load_head(tmp_path / "n.json")[0].equals(nl)
