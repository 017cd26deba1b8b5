"""Weighted kNN confidence and hard labels in the embedding space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import DataError
from .embedder import EmbeddingModel, embed


@dataclass(frozen=True)
class PseudoLabel:
    sample_index: int
    predicted_label: int
    confidence: float
    embedding: tuple


def classify(confidence) -> int:
    """1 when the class-1 confidence is strictly above one half."""
    return int(confidence > 0.5)


def _confidence_from_neighbors(nn_labels, nn_dist, out_dim):
    d = nn_dist / np.sqrt(out_dim)
    y = nn_labels.astype(np.float64)
    conf = np.mean(y * (1.0 - d) + (1.0 - y) * d, axis=1)
    return np.clip(conf, 0.0, 1.0)


def knn_confidences(queries, labeled_embeddings, labeled_labels, k: int, kernels=None):
    """Class-1 confidence for every query row.

    Neighbour distances are divided by ``sqrt(out_dim)``, the diameter of
    the unit hypercube, so each one lies in [0, 1]. Returns
    ``(confidences, neighbor_indices)``.
    """
    q = np.ascontiguousarray(queries, dtype=np.float64)
    r = np.ascontiguousarray(labeled_embeddings, dtype=np.float64)
    y = np.asarray(labeled_labels, dtype=np.int64)
    if q.ndim == 1:
        q = q[None, :]
    if k < 1 or k > r.shape[0]:
        raise DataError(f"k={k} must lie in [1, {r.shape[0]}]")
    if q.shape[0] == 0:
        return np.empty(0), np.empty((0, k), dtype=np.int64)
    kern = kernels or _backend.kernels
    idx, dist = kern.knn_search(q, r, k)
    return _confidence_from_neighbors(y[idx], dist, r.shape[1]), idx


def knn_confidence(query_embedding, labeled_embeddings, labeled_labels, k: int) -> float:
    conf, _ = knn_confidences(np.atleast_2d(query_embedding), labeled_embeddings,
                              labeled_labels, k)
    return float(conf[0])


def pseudolabel_pool(model: EmbeddingModel, labeled_features, labeled_labels,
                     unlabeled_features, k: int = 5, pool_indices=None):
    """Embed both sets and pseudo-label every pool row, in pool order."""
    u = np.asarray(unlabeled_features, dtype=np.float64)
    if u.shape[0] == 0:
        return []
    zl = embed(model, labeled_features)
    zu = embed(model, u)
    conf, _ = knn_confidences(zu, zl, labeled_labels, k)
    if pool_indices is None:
        pool_indices = range(u.shape[0])
    return [PseudoLabel(int(i), classify(c), float(c), tuple(float(v) for v in z))
            for i, c, z in zip(pool_indices, conf, zu)]
