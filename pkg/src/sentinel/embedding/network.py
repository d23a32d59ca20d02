"""Small trainable embedder: standardize -> tanh hidden -> linear -> unit norm.

Desk-scale stand-in for a deep embedding model: one hidden layer is
enough to exercise the full training loop (mining, batch hinge loss,
backprop through the normalization step) with gradients that can be
verified against central finite differences.

The input stage standardizes each crop to zero mean and unit variance.
That removes the brightness/contrast component every face shares, which
otherwise dominates the input correlation structure so heavily that
plain gradient descent stalls on the triplet-collapse plateau. It is a
fixed, parameter-free transform, so gradients with respect to the
weights are unaffected.

The output normalization e = z / |z| is differentiated exactly; its
Jacobian is the projection (I - e e^T) / |z|, which is what keeps the
analytic gradients in agreement with finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from sentinel.embedding.core import EMBEDDING_DIM
from sentinel.embedding.triplet import Triplet, mine_triplets
from sentinel.errors import ConfigError, TrainingError

NETWORK_FORMAT = "embedder-net"
NETWORK_VERSION = 1

DEFAULT_INPUT_DIM = 256  # 16x16 grayscale crop
DEFAULT_HIDDEN_DIM = 64


@dataclass
class EmbedderNetwork:
    """Weights and biases for the two-layer embedder."""

    w1: np.ndarray  # (hidden, d_in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d_out, hidden)
    b2: np.ndarray  # (d_out,)
    margin: float = 0.2
    seed: int = 0

    @classmethod
    def initialize(
        cls,
        d_in: int = DEFAULT_INPUT_DIM,
        hidden: int = DEFAULT_HIDDEN_DIM,
        d_out: int = EMBEDDING_DIM,
        margin: float = 0.2,
        seed: int = 0,
    ) -> "EmbedderNetwork":
        if margin <= 0:
            raise ConfigError(f"margin must be positive, got {margin}")
        rng = np.random.default_rng(seed)
        w1 = rng.normal(scale=1.0 / np.sqrt(d_in), size=(hidden, d_in))
        b1 = np.zeros(hidden)
        w2 = rng.normal(scale=1.0 / np.sqrt(hidden), size=(d_out, hidden))
        b2 = np.zeros(d_out)
        return cls(w1=w1, b1=b1, w2=w2, b2=b2, margin=margin, seed=seed)

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def d_out(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "EmbedderNetwork":
        return EmbedderNetwork(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            margin=self.margin,
            seed=self.seed,
        )

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(p)) for p in (self.w1, self.b1, self.w2, self.b2)
        )


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    return (x - mu) / (sd + 1e-6)


def _forward(net: EmbedderNetwork, x: np.ndarray):
    """Batch forward pass with the cache backprop needs."""
    xs = _standardize(x)
    z1 = xs @ net.w1.T + net.b1
    h = np.tanh(z1)
    z2 = h @ net.w2.T + net.b2
    norms = np.linalg.norm(z2, axis=1, keepdims=True)
    e = np.zeros_like(z2)
    degenerate = norms[:, 0] < 1e-12
    if np.any(degenerate):
        # Featureless input (e.g. a uniform crop): fall back to a fixed
        # unit vector so the output is still a valid embedding.
        e[degenerate, 0] = 1.0
        norms = np.where(norms < 1e-12, 1.0, norms)
    e = np.where(degenerate[:, None], e, z2 / norms)
    return e, (xs, h, z2, norms)


def forward_batch(net: EmbedderNetwork, x: np.ndarray) -> np.ndarray:
    """Embeddings for a (n, d_in) batch of inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.d_in:
        raise ValueError(f"expected (n, {net.d_in}) inputs, got {x.shape}")
    e, _ = _forward(net, x)
    return e


def embed(net: EmbedderNetwork, face_pixels: np.ndarray) -> np.ndarray:
    """Embed one face crop; deterministic for fixed parameters."""
    x = np.asarray(face_pixels, dtype=np.float64)
    if x.shape != (net.d_in,):
        raise ValueError(f"expected {net.d_in} pixels, got shape {x.shape}")
    if x.min() < -1e-9 or x.max() > 1.0 + 1e-9:
        raise ValueError("pixel values must lie in [0, 1]")
    e, _ = _forward(net, x[None, :])
    return e[0]


def batch_triplet_loss_and_grads(
    net: EmbedderNetwork,
    x: np.ndarray,
    triplets: Sequence[Triplet],
    margin: float,
):
    """Mean hinge loss over fixed triplets and its parameter gradients.

    Returns (loss, grads) with grads keyed w1/b1/w2/b2. The triplet set
    is taken as given so the loss is a differentiable function of the
    parameters (re-mining inside would make it piecewise in a way finite
    differences could not check).
    """
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    if not triplets:
        raise ValueError("need at least one triplet")
    x = np.asarray(x, dtype=np.float64)
    e, (x, h, z2, norms) = _forward(net, x)

    t = len(triplets)
    a_idx = np.fromiter((tr.anchor for tr in triplets), dtype=int, count=t)
    p_idx = np.fromiter((tr.positive for tr in triplets), dtype=int, count=t)
    n_idx = np.fromiter((tr.negative for tr in triplets), dtype=int, count=t)

    ap = e[a_idx] - e[p_idx]
    an = e[a_idx] - e[n_idx]
    hinge = np.sum(ap * ap, axis=1) - np.sum(an * an, axis=1) + margin
    active = hinge > 0.0
    loss = float(np.mean(np.maximum(hinge, 0.0)))

    # d(loss)/d(embedding), accumulated per sample over active triplets.
    de = np.zeros_like(e)
    coeff = 2.0 / t
    for k in np.nonzero(active)[0]:
        a, p, nn = a_idx[k], p_idx[k], n_idx[k]
        de[a] += coeff * (ap[k] - an[k])
        de[p] -= coeff * ap[k]
        de[nn] += coeff * an[k]

    # Through normalization: dz2 = (de - (de . e) e) / |z2|.
    dz2 = (de - np.sum(de * e, axis=1, keepdims=True) * e) / norms
    dw2 = dz2.T @ h
    db2 = dz2.sum(axis=0)
    dh = dz2 @ net.w2
    dz1 = dh * (1.0 - h * h)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)

    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
    return loss, grads


def train_embedder(
    net: EmbedderNetwork,
    inputs: np.ndarray,
    labels: Sequence[int],
    epochs: int,
    learning_rate: float = 0.05,
    margin: float | None = None,
    seed: int = 0,
    max_triplets_per_epoch: int = 2048,
) -> tuple[EmbedderNetwork, list[float]]:
    """Full-batch gradient descent on mined triplets.

    Mines fresh triplets from the current embeddings each epoch and takes
    one descent step. Epochs with no mineable triplets record loss 0 and
    skip the update. Raises TrainingError naming the epoch if the loss or
    any parameter goes non-finite.
    """
    x = np.asarray(inputs, dtype=np.float64)
    lab = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("dataset must be a nonempty (n, d_in) array")
    if len(np.unique(lab)) < 2:
        raise ConfigError("training needs at least two classes")
    if margin is None:
        margin = net.margin

    rng = np.random.default_rng(seed)
    net = net.copy()
    net.margin = margin
    net.seed = seed
    losses: list[float] = []
    for epoch in range(epochs):
        e = forward_batch(net, x)
        triplets = mine_triplets(e, lab, margin)
        if not triplets:
            losses.append(0.0)
            continue
        if len(triplets) > max_triplets_per_epoch:
            pick = rng.choice(len(triplets), size=max_triplets_per_epoch, replace=False)
            triplets = [triplets[i] for i in sorted(pick)]
        loss, grads = batch_triplet_loss_and_grads(net, x, triplets, margin)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        net.w1 -= learning_rate * grads["w1"]
        net.b1 -= learning_rate * grads["b1"]
        net.w2 -= learning_rate * grads["w2"]
        net.b2 -= learning_rate * grads["b2"]
        if not net.all_finite():
            raise TrainingError(f"non-finite parameters at epoch {epoch}", epoch=epoch)
        losses.append(loss)
    return net, losses


def save_network(net: EmbedderNetwork, path: str | Path) -> None:
    """Versioned JSON document with row-major weight matrices."""
    doc = {
        "format": NETWORK_FORMAT,
        "version": NETWORK_VERSION,
        "d_in": net.d_in,
        "hidden": net.hidden,
        "d_out": net.d_out,
        "activation": "tanh",
        "margin": net.margin,
        "seed": net.seed,
        "w1": net.w1.tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path: str | Path) -> EmbedderNetwork:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != NETWORK_FORMAT:
        raise ValueError(f"not an embedder network file: {path}")
    if doc.get("version") != NETWORK_VERSION:
        raise ValueError(f"unsupported network file version {doc.get('version')}")
    net = EmbedderNetwork(
        w1=np.array(doc["w1"], dtype=np.float64),
        b1=np.array(doc["b1"], dtype=np.float64),
        w2=np.array(doc["w2"], dtype=np.float64),
        b2=np.array(doc["b2"], dtype=np.float64),
        margin=float(doc["margin"]),
        seed=int(doc["seed"]),
    )
    if net.w1.shape != (doc["hidden"], doc["d_in"]) or net.w2.shape != (
        doc["d_out"],
        doc["hidden"],
    ):
        raise ValueError("network file dimensions do not match its matrices")
    return net
