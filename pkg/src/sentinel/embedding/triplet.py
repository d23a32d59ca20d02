"""Triplet hinge loss and semi-hard triplet mining.

The loss pulls anchor-positive pairs together and pushes anchor-negative
pairs apart until the squared distances differ by at least the margin:

    loss = max(0, d(a,p)^2 - d(a,n)^2 + margin)

Mining considers every ordered same-class (anchor, positive) pair and
selects per pair the closest negative inside the semi-hard window
d(a,p) < d(a,n) < d(a,p) + margin, falling back to the hardest (closest)
negative when the window is empty. Restricting to one negative per pair
keeps the triplet count linear in the number of pairs instead of cubic
in the number of samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sentinel.errors import ConfigError


@dataclass(frozen=True)
class Triplet:
    """Sample indices of an (anchor, positive, negative) selection."""

    anchor: int
    positive: int
    negative: int


def triplet_loss(a: np.ndarray, p: np.ndarray, n: np.ndarray, margin: float) -> float:
    """Hinge on squared distances; zero once the margin is satisfied."""
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise ValueError("triplet members must share one dimension")
    d_ap_sq = float(np.sum((a - p) ** 2))
    d_an_sq = float(np.sum((a - n) ** 2))
    return max(0.0, d_ap_sq - d_an_sq + margin)


def mine_triplets(
    embeddings: Sequence[np.ndarray] | np.ndarray,
    labels: Sequence[int],
    margin: float,
) -> list[Triplet]:
    """Select one semi-hard negative per ordered same-class pair.

    Ties on negative distance break toward the lowest sample index.
    Fewer than two classes yields an empty list (nothing to push apart).
    """
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    emb = np.asarray(embeddings, dtype=np.float64)
    lab = np.asarray(labels)
    if emb.ndim != 2 or emb.shape[0] != lab.shape[0]:
        raise ValueError("embeddings and labels must align on the sample axis")
    n = emb.shape[0]
    if n == 0 or len(np.unique(lab)) < 2:
        return []

    # Pairwise distance matrix via the Gram expansion.
    sq = np.sum(emb * emb, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * emb @ emb.T, 0.0)
    dist = np.sqrt(d2)

    triplets: list[Triplet] = []
    for anchor in range(n):
        neg_idx = np.nonzero(lab != lab[anchor])[0]
        if neg_idx.size == 0:
            continue
        d_neg = dist[anchor, neg_idx]
        hardest = int(neg_idx[np.argmin(d_neg)])
        pos_idx = np.nonzero((lab == lab[anchor]) & (np.arange(n) != anchor))[0]
        for positive in pos_idx:
            d_ap = dist[anchor, positive]
            in_window = (d_neg > d_ap) & (d_neg < d_ap + margin)
            if np.any(in_window):
                cand = neg_idx[in_window]
                negative = int(cand[np.argmin(dist[anchor, cand])])
            else:
                negative = hardest
            triplets.append(Triplet(anchor, int(positive), negative))
    return triplets
