"""Retrieval fine-tuning on scarce data: synthetic triples, embedding fusion, IR metrics."""

from .corpus import Document, Query, SplitSpec, TrainingTriple
from .encoder import Encoder, FrozenFeaturizer, FusionConfig, TrainableHead, fuse, merge_weights
from .trainer import TrainConfig, train
from .vectorstore import VectorStore, cosine

__all__ = [
    "Document", "Query", "SplitSpec", "TrainingTriple",
    "Encoder", "FrozenFeaturizer", "FusionConfig", "TrainableHead", "fuse", "merge_weights",
    "TrainConfig", "train", "VectorStore", "cosine",
]
