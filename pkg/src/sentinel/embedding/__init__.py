"""Embedding geometry, triplet loss and mining, and the trainable embedder."""

from sentinel.embedding.core import (
    EMBEDDING_DIM,
    QuantizedEmbedding,
    dequantize,
    distance,
    embedding_from_bytes,
    embedding_to_bytes,
    normalize,
    quantize,
)
from sentinel.embedding.network import (
    EmbedderNetwork,
    batch_triplet_loss_and_grads,
    embed,
    load_network,
    save_network,
    train_embedder,
)
from sentinel.embedding.triplet import Triplet, mine_triplets, triplet_loss

__all__ = [
    "EMBEDDING_DIM",
    "EmbedderNetwork",
    "QuantizedEmbedding",
    "Triplet",
    "batch_triplet_loss_and_grads",
    "dequantize",
    "distance",
    "embed",
    "embedding_from_bytes",
    "embedding_to_bytes",
    "load_network",
    "mine_triplets",
    "normalize",
    "quantize",
    "save_network",
    "train_embedder",
]
