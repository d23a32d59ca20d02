"""Unit-hypersphere embedding geometry and 8-bit quantization.

An embedding is a 128-component float64 vector of unit L2 norm, so the
Euclidean distance between any two lies in [0, 2].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EMBEDDING_DIM = 128

_BINARY_FMT = "<%dd" % EMBEDDING_DIM  # little-endian float64 components


def normalize(values: np.ndarray) -> np.ndarray:
    """Project a raw vector onto the unit hypersphere."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (EMBEDDING_DIM,):
        raise ValueError(f"expected {EMBEDDING_DIM} components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding has non-finite components")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two embeddings."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def embedding_to_bytes(values: np.ndarray) -> bytes:
    """1024-byte binary form: 128 little-endian float64 values."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (EMBEDDING_DIM,):
        raise ValueError(f"expected {EMBEDDING_DIM} components, got shape {v.shape}")
    return struct.pack(_BINARY_FMT, *v.tolist())


def embedding_from_bytes(data: bytes) -> np.ndarray:
    if len(data) != EMBEDDING_DIM * 8:
        raise ValueError(f"expected {EMBEDDING_DIM * 8} bytes, got {len(data)}")
    return np.array(struct.unpack(_BINARY_FMT, data), dtype=np.float64)


@dataclass(frozen=True)
class QuantizedEmbedding:
    """Affine min-max 8-bit form: component = offset + byte * scale."""

    data: bytes  # 128 unsigned 8-bit values
    scale: float
    offset: float

    def to_bytes(self) -> bytes:
        return self.data + struct.pack("<dd", self.scale, self.offset)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "QuantizedEmbedding":
        if len(raw) != EMBEDDING_DIM + 16:
            raise ValueError(f"expected {EMBEDDING_DIM + 16} bytes, got {len(raw)}")
        scale, offset = struct.unpack("<dd", raw[EMBEDDING_DIM:])
        return cls(data=raw[:EMBEDDING_DIM], scale=scale, offset=offset)


def quantize(values: np.ndarray) -> QuantizedEmbedding:
    """Quantize to 8 bits; round-trip error is at most half a step."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (EMBEDDING_DIM,):
        raise ValueError(f"expected {EMBEDDING_DIM} components, got shape {v.shape}")
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        # Constant vector: zero scale makes the round trip exact.
        return QuantizedEmbedding(data=bytes(EMBEDDING_DIM), scale=0.0, offset=lo)
    scale = (hi - lo) / 255.0
    codes = np.clip(np.rint((v - lo) / scale), 0, 255).astype(np.uint8)
    return QuantizedEmbedding(data=codes.tobytes(), scale=scale, offset=lo)


def dequantize(q: QuantizedEmbedding) -> np.ndarray:
    codes = np.frombuffer(q.data, dtype=np.uint8).astype(np.float64)
    return q.offset + codes * q.scale
