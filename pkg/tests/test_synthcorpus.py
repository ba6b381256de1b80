import numpy as np
import pytest

from refine.encoder import FrozenFeaturizer
from refine.evaluator import evaluate
from refine.synthcorpus import SynthSpec, generate_corpus
from refine.vectorstore import ingest


def vanilla_recall(spec, k, hash_seed=0):
    docs, queries = generate_corpus(spec)
    f = FrozenFeaturizer(256, hash_seed=hash_seed)
    return evaluate(queries, ingest(docs, f), f, ks=[k]).per_k[k]["recall"]


def test_shapes_and_labels():
    docs, queries = generate_corpus(SynthSpec(num_docs=100))
    assert len(docs) == len(queries) == 100
    assert len({d.id for d in docs}) == 100
    lo, hi = SynthSpec().doc_length
    for d, q in zip(docs, queries):
        assert lo <= len(d.text.split()) <= hi
        assert q.gold_doc_ids == frozenset({d.id})


def test_deterministic():
    assert generate_corpus(SynthSpec(seed=4)) == generate_corpus(SynthSpec(seed=4))
    assert generate_corpus(SynthSpec(seed=4)) != generate_corpus(SynthSpec(seed=5))


def test_zero_overlap_is_trivial():
    assert vanilla_recall(SynthSpec(num_docs=100, distractor_overlap=0.0), 1) == 1.0


def test_vanilla_recall_falls_with_overlap():
    means = [np.mean([vanilla_recall(SynthSpec(distractor_overlap=o, seed=s), 3, hash_seed=s) for s in range(5)])
             for o in (0.0, 0.5, 0.9)]
    assert means[0] >= means[1] >= means[2]
    assert means[2] < 0.8


def test_small_vocabulary_raises():
    with pytest.raises(ValueError):
        generate_corpus(SynthSpec(num_docs=100, vocab_size=50))


@pytest.mark.parametrize("kw", [dict(distractor_overlap=1.0), dict(num_docs=0), dict(doc_length=(10, 5))])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)
