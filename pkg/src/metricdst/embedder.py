"""Two-layer metric embedding trained with a pairwise contrastive loss.

The network maps ``x -> sigmoid(relu(x W1 + b1) W2 + b2)`` so every
embedding lies inside the unit hypercube ``(0, 1)^out_dim``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _backend
from .core import DataError, make_rng

CHECKPOINT_FORMAT = "metricdst-embedding-v1"
LOGIT_CLIP = 36.0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    m_pos: float = 0.25
    m_neg: float = 1.0
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    min_improvement: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise DataError("batch_size must be at least 2")
        if not self.m_neg > self.m_pos >= 0:
            raise DataError("margins must satisfy m_neg > m_pos >= 0")
        if self.learning_rate < 0:
            raise DataError("learning_rate must be nonnegative")
        if self.max_epochs < 1 or self.patience < 1:
            raise DataError("max_epochs and patience must be positive")


@dataclass(frozen=True)
class EmbeddingModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise DataError(f"non-finite weights in {name}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        n_in, hid = self.w1.shape
        if self.b1.shape != (hid,) or self.w2.shape[0] != hid:
            raise DataError("inconsistent hidden layer shapes")
        if self.b2.shape != (self.w2.shape[1],):
            raise DataError("inconsistent output layer shapes")

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def initialize(cls, n_features: int, hidden_dim: int = 8, out_dim: int = 2,
                   seed: int = 0) -> "EmbeddingModel":
        """Glorot-uniform weights, zero biases."""
        rng = make_rng(seed, "init")
        lim1 = np.sqrt(6.0 / (n_features + hidden_dim))
        lim2 = np.sqrt(6.0 / (hidden_dim + out_dim))
        return cls(rng.uniform(-lim1, lim1, (n_features, hidden_dim)), np.zeros(hidden_dim),
                   rng.uniform(-lim2, lim2, (hidden_dim, out_dim)), np.zeros(out_dim))

    @classmethod
    def zeros(cls, n_features, hidden_dim=8, out_dim=2):
        return cls(np.zeros((n_features, hidden_dim)), np.zeros(hidden_dim),
                   np.zeros((hidden_dim, out_dim)), np.zeros(out_dim))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, theta, n_features, hidden_dim, out_dim):
        w1, b1, w2, b2 = _backend._kernels_py.unpack(np.asarray(theta, dtype=np.float64),
                                                     n_features, hidden_dim, out_dim)
        return cls(w1, b1, w2, b2)

    def dims(self):
        return self.n_features, self.hidden_dim, self.out_dim


@dataclass
class TrainResult:
    model: EmbeddingModel
    loss_trace: list = field(default_factory=list)
    epochs: int = 0


def embed(model: EmbeddingModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite input to embed")
    h = np.maximum(x @ model.w1 + model.b1, 0.0)
    # clipped logits keep every coordinate strictly inside (0, 1)
    return expit(np.clip(h @ model.w2 + model.b2, -LOGIT_CLIP, LOGIT_CLIP))


def contrastive_loss(embeddings, labels, m_pos: float, m_neg: float) -> float:
    """Sum of pairwise hinge terms over all unordered row pairs."""
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise DataError("embeddings and labels shapes do not match")
    n = z.shape[0]
    i, j = np.triu_indices(n, 1)
    d = np.linalg.norm(z[i] - z[j], axis=1)
    same = y[i] == y[j]
    terms = np.where(same, np.maximum(0.0, d - m_pos), np.maximum(0.0, m_neg - d))
    return float(terms.sum())


def mean_pair_loss(embeddings, labels, m_pos: float, m_neg: float, kernels=None) -> float:
    """Contrastive loss averaged over all pairs (0.0 for fewer than two rows)."""
    k = kernels or _backend.kernels
    return float(k.mean_pair_loss(np.ascontiguousarray(embeddings, dtype=np.float64),
                                  np.ascontiguousarray(labels, dtype=np.int64), m_pos, m_neg))


def loss_gradient(model: EmbeddingModel, batch_features, batch_labels, m_pos, m_neg,
                  kernels=None):
    """Batch loss and its gradients ``(loss, {"w1", "b1", "w2", "b2"})``.

    Pair distances are smoothed as ``sqrt(sq + 1e-12)``; exactly coincident
    pairs and pairs sitting on a margin contribute zero gradient.
    """
    k = kernels or _backend.kernels
    x = np.ascontiguousarray(batch_features, dtype=np.float64)
    y = np.ascontiguousarray(batch_labels, dtype=np.int64)
    if x.shape[0] < 2:
        raise DataError("a batch needs at least two rows")
    theta = model.flat()
    grad = np.zeros_like(theta)
    loss = k.batch_loss_grad(x, y, theta, *model.dims(), float(m_pos), float(m_neg), grad)
    g = EmbeddingModel.from_flat(grad, *model.dims())
    return loss, {"w1": g.w1, "b1": g.b1, "w2": g.w2, "b2": g.b2}


def train(model: EmbeddingModel, features, labels, config: TrainConfig,
          kernels=None, seed_key=()) -> TrainResult:
    """Mini-batch Adam on the contrastive loss.

    Each epoch reshuffles the rows; batches smaller than two rows are
    skipped. After every epoch the mean pair loss over the full training
    set is recorded, and training stops once it has failed to improve by
    ``config.min_improvement`` for ``config.patience`` epochs in a row.
    """
    k = kernels or _backend.kernels
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise DataError("features and labels differ in length")
    if len(np.unique(y)) < 2:
        raise DataError("training needs both classes (no negative pairs otherwise)")
    dims = model.dims()
    theta = model.flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    rng = make_rng(config.seed, "train", *seed_key)
    trace = []
    best = np.inf
    stale = 0
    epochs = 0
    for epochs in range(1, config.max_epochs + 1):
        order = rng.permutation(x.shape[0]).astype(np.int64)
        step = k.train_epoch(x, y, order, config.batch_size, theta, m, v, step, *dims,
                             config.learning_rate, config.beta1, config.beta2,
                             config.adam_eps, config.m_pos, config.m_neg)
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError("training diverged to non-finite weights")
        current = EmbeddingModel.from_flat(theta, *dims)
        loss = mean_pair_loss(embed(current, x), y, config.m_pos, config.m_neg, k)
        trace.append(loss)
        if loss < best - config.min_improvement:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainResult(EmbeddingModel.from_flat(theta, *dims), trace, epochs)


def save_checkpoint(model: EmbeddingModel, path, config: TrainConfig | None = None) -> None:
    """JSON checkpoint: layer shapes, row-major weights and the training config."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "shapes": {"n_features": model.n_features, "hidden_dim": model.hidden_dim,
                   "out_dim": model.out_dim},
        "w1": model.w1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.ravel().tolist(),
        "b2": model.b2.tolist(),
        "train_config": asdict(config) if config is not None else None,
    }
    from .io import atomic_write_text
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(model, train_config_or_None)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a metricdst embedding checkpoint")
    s = doc["shapes"]
    n, h, o = s["n_features"], s["hidden_dim"], s["out_dim"]
    model = EmbeddingModel(np.reshape(doc["w1"], (n, h)), np.asarray(doc["b1"]),
                           np.reshape(doc["w2"], (h, o)), np.asarray(doc["b2"]))
    cfg = doc.get("train_config")
    return model, (TrainConfig(**cfg) if cfg is not None else None)


__all__ = [
    "TrainConfig", "EmbeddingModel", "TrainResult", "embed", "contrastive_loss",
    "mean_pair_loss", "loss_gradient", "train", "save_checkpoint", "load_checkpoint",
]
