"""Divergence functions for comparing chunk representations.

Topic-simplex vectors are compared with Kullback-Leibler divergence
(natural log); embedding vectors with cosine distance.  The chunk being
characterized is always the KL reference distribution: ``kl_divergence(p, q)``
reads "how surprised is p's distribution by q".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOPIC_SIMPLEX = "topic_simplex"
EMBEDDING = "embedding"

KL_EPSILON = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A chunk's representation, tagged with the metric it supports."""

    chunk_id: str
    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError(f"{self.chunk_id}: values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.chunk_id}: non-finite entries")
        if self.kind == TOPIC_SIMPLEX:
            if np.any(values <= 0):
                raise ValueError(f"{self.chunk_id}: simplex entries must be > 0")
            if abs(float(values.sum()) - 1.0) > 1e-9:
                raise ValueError(f"{self.chunk_id}: simplex does not sum to 1")
        elif self.kind == EMBEDDING:
            if not np.any(values):
                raise ValueError(f"{self.chunk_id}: zero-norm embedding")
        else:
            raise ValueError(f"{self.chunk_id}: unknown vector kind {self.kind!r}")


def floor_simplex(p: np.ndarray, epsilon: float = KL_EPSILON) -> np.ndarray:
    """Clamp entries below ``epsilon`` and renormalize to sum 1."""
    p = np.asarray(p, dtype=np.float64)
    p = np.maximum(p, epsilon)
    return p / p.sum()


def kl_divergence(p, q, epsilon: float = KL_EPSILON) -> float:
    """KL(p || q) in nats, with epsilon flooring on both arguments.

    ``p`` is the chunk being characterized (the reference distribution),
    ``q`` the comparison chunk.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    p = floor_simplex(p, epsilon)
    q = floor_simplex(q, epsilon)
    return float(np.sum(p * (np.log(p) - np.log(q))))


def cosine_distance(u, v) -> float:
    """1 - cos(u, v); raises on zero-norm input."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance undefined for zero-norm vectors")
    return 1.0 - float(np.dot(u, v)) / (nu * nv)
