"""Self-training loop with confidence-ranked (ST) or probe-based diverse (DST) selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DataError, make_rng
from .embedder import EmbeddingModel, TrainConfig, embed, mean_pair_loss, train
from .pseudolabel import knn_confidences, pseudolabel_pool

STRATEGIES = ("ST", "DST")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture, optimiser and kNN settings shared by every method."""

    hidden_dim: int = 8
    out_dim: int = 2
    k: int = 5
    retrain_fresh: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class SelfTrainConfig:
    p: Optional[int] = None
    mu: float = 0.9
    max_iterations: int = 100
    patience: int = 5
    strategy: str = "DST"
    attempt_cap_multiplier: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.p is not None and (self.p < 2 or self.p % 2):
            raise DataError("p must be a positive even integer")
        if not 0.5 < self.mu <= 1.0:
            raise DataError("mu must lie in (0.5, 1]")
        if self.strategy not in STRATEGIES:
            raise DataError(f"strategy must be one of {STRATEGIES}")
        if self.max_iterations < 1 or self.patience < 1 or self.attempt_cap_multiplier < 1:
            raise DataError("max_iterations, patience and attempt_cap_multiplier must be positive")


@dataclass
class IterationRecord:
    iteration: int
    added_indices: list = field(default_factory=list)
    added_labels: list = field(default_factory=list)
    added_confidences: list = field(default_factory=list)
    added_embeddings: list = field(default_factory=list)
    validation_loss: Optional[float] = None
    probe_attempts: int = 0
    labeled_size: int = 0
    pool_size: int = 0


@dataclass
class SelfTrainResult:
    model: EmbeddingModel
    labeled_features: np.ndarray
    labeled_labels: np.ndarray
    records: list
    best_iteration: int
    stop_reason: str
    initial_validation_loss: Optional[float] = None

    def predict_confidence(self, features, k: int) -> np.ndarray:
        z = embed(self.model, features)
        zl = embed(self.model, self.labeled_features)
        conf, _ = knn_confidences(z, zl, self.labeled_labels, k)
        return conf


def default_p(n_labeled: int) -> int:
    """Greatest even integer not above sqrt(n)."""
    if n_labeled < 4:
        raise DataError(f"n_labeled={n_labeled} gives p < 2")
    r = math.isqrt(n_labeled)
    return r - (r % 2)


def _score(pl, c: int) -> float:
    return pl.confidence if c == 1 else 1.0 - pl.confidence


def select_st(pseudolabels, p: int, mu: float) -> list:
    """Top-p by ``max(c, 1 - c)`` among those scoring at least ``mu``."""
    scored = [(max(pl.confidence, 1.0 - pl.confidence), pl) for pl in pseudolabels]
    kept = [(s, pl) for s, pl in scored if s >= mu]
    kept.sort(key=lambda t: (-t[0], t[1].sample_index))
    return [pl for _, pl in kept[:p]]


def select_dst(pseudolabels, p: int, mu: float, out_dim: int, attempt_cap: int,
               seed: int, *, return_attempts: bool = False, rng=None):
    """Diverse, class-balanced selection by uniform probes in the unit cube.

    Class 1 is filled first, then class 0, from one shared budget of
    ``attempt_cap * p`` probes. Each probe takes the nearest unselected
    pseudo-label predicted as the target class and keeps it if its score
    for that class is at least ``mu``. A short side is matched by
    undersampling the other side.
    """
    if rng is None:
        rng = make_rng(seed, "dst")
    budget = attempt_cap * p
    half = p // 2
    attempts = 0
    chosen = {0: [], 1: []}
    for c in (1, 0):
        cands = [pl for pl in pseudolabels if pl.predicted_label == c]
        if not cands:
            continue
        emb = np.array([pl.embedding for pl in cands], dtype=np.float64)
        taken = np.zeros(len(cands), dtype=bool)
        while len(chosen[c]) < half and attempts < budget and not taken.all():
            attempts += 1
            probe = rng.random(out_dim)
            d = np.sum((emb - probe) ** 2, axis=1)
            d[taken] = np.inf
            j = int(np.argmin(d))
            if _score(cands[j], c) >= mu:
                taken[j] = True
                chosen[c].append(cands[j])
    n = min(len(chosen[0]), len(chosen[1]))
    for c in (0, 1):
        if len(chosen[c]) > n:
            keep = np.sort(rng.choice(len(chosen[c]), size=n, replace=False))
            chosen[c] = [chosen[c][i] for i in keep]
    selected = chosen[1] + chosen[0]
    if return_attempts:
        return selected, attempts
    return selected


def _fit(model, x, y, cfg: ModelConfig, key):
    return train(model, x, y, cfg.train, seed_key=key).model


def run_self_training(labeled_x, labeled_y, unlabeled_x, validation_x=None,
                      validation_y=None, model_config: ModelConfig = ModelConfig(),
                      config: SelfTrainConfig = SelfTrainConfig(), pool_indices=None,
                      initial_model: EmbeddingModel | None = None) -> SelfTrainResult:
    """Iterate train -> pseudo-label -> select -> move until a stop condition.

    Stops on validation-loss patience (returning the best snapshot), an
    empty selection, an exhausted pool, or ``max_iterations``.
    ``pool_indices`` names the pool rows in the diagnostics (defaults to
    positions in ``unlabeled_x``).
    """
    lx = np.asarray(labeled_x, dtype=np.float64)
    ly = np.asarray(labeled_y, dtype=np.int64)
    ux = np.asarray(unlabeled_x, dtype=np.float64).reshape(-1, lx.shape[1])
    if len(np.unique(ly)) < 2:
        raise DataError("labeled set must contain both classes")
    pool_ids = np.arange(ux.shape[0]) if pool_indices is None else np.asarray(pool_indices)
    if pool_ids.shape[0] != ux.shape[0]:
        raise DataError("pool_indices length does not match unlabeled rows")
    p = config.p if config.p is not None else default_p(lx.shape[0])
    has_val = validation_x is not None and len(validation_x) >= 2
    if has_val:
        vx = np.asarray(validation_x, dtype=np.float64)
        vy = np.asarray(validation_y, dtype=np.int64)
    tcfg = model_config.train

    def val_loss(m):
        if not has_val:
            return None
        return mean_pair_loss(embed(m, vx), vy, tcfg.m_pos, tcfg.m_neg)

    if initial_model is None:
        init = EmbeddingModel.initialize(lx.shape[1], model_config.hidden_dim,
                                         model_config.out_dim, seed=tcfg.seed)
        model = _fit(init, lx, ly, model_config, ("iter", 0))
    else:
        model = initial_model
    pool = np.ones(ux.shape[0], dtype=bool)
    best = (val_loss(model), model, lx, ly, 0)
    initial_loss = best[0]
    stale = 0
    records = []
    stop = "max_iterations"
    for it in range(1, config.max_iterations + 1):
        if not pool.any():
            stop = "pool_exhausted"
            break
        live = np.flatnonzero(pool)
        pls = pseudolabel_pool(model, lx, ly, ux[live], model_config.k, pool_indices=live)
        attempts = 0
        if config.strategy == "ST":
            sel = select_st(pls, p, config.mu)
        else:
            sel, attempts = select_dst(pls, p, config.mu, model_config.out_dim,
                                       config.attempt_cap_multiplier, config.seed,
                                       return_attempts=True,
                                       rng=make_rng(config.seed, "dst", it))
        rec = IterationRecord(
            iteration=it,
            added_indices=[int(pool_ids[pl.sample_index]) for pl in sel],
            added_labels=[pl.predicted_label for pl in sel],
            added_confidences=[pl.confidence for pl in sel],
            added_embeddings=[list(pl.embedding) for pl in sel],
            probe_attempts=attempts,
        )
        if not sel:
            rec.labeled_size, rec.pool_size = lx.shape[0], int(pool.sum())
            records.append(rec)
            stop = "empty_selection"
            break
        pos = np.array([pl.sample_index for pl in sel], dtype=np.int64)
        pool[pos] = False
        lx = np.vstack([lx, ux[pos]])
        ly = np.concatenate([ly, np.array([pl.predicted_label for pl in sel], dtype=np.int64)])
        start = model
        if model_config.retrain_fresh:
            start = EmbeddingModel.initialize(lx.shape[1], model_config.hidden_dim,
                                              model_config.out_dim, seed=tcfg.seed)
        model = _fit(start, lx, ly, model_config, ("iter", it))
        rec.validation_loss = val_loss(model)
        rec.labeled_size, rec.pool_size = lx.shape[0], int(pool.sum())
        records.append(rec)
        if not has_val:
            best = (None, model, lx, ly, it)
            continue
        if rec.validation_loss < best[0]:
            best = (rec.validation_loss, model, lx, ly, it)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                stop = "patience"
                break
    else:
        if not pool.any():
            stop = "pool_exhausted"
    _, model, lx, ly, best_it = best
    return SelfTrainResult(model, lx, ly, records, best_it, stop, initial_loss)


def selection_diversity(records, embeddings=None) -> dict:
    """Per-class mean pairwise distance between selected pseudo-samples.

    Uses the embeddings stored on each record (coordinates at selection
    time) unless ``embeddings`` maps sample index to coordinates. Classes
    with fewer than two selections map to ``None``.
    """
    groups = {0: [], 1: []}
    for rec in records:
        for j, (idx, lab) in enumerate(zip(rec.added_indices, rec.added_labels)):
            z = rec.added_embeddings[j] if embeddings is None else embeddings[idx]
            groups[int(lab)].append(np.asarray(z, dtype=np.float64))
    out = {}
    for c, pts in groups.items():
        if len(pts) < 2:
            out[c] = None
            continue
        z = np.vstack(pts)
        i, j = np.triu_indices(len(pts), 1)
        out[c] = float(np.linalg.norm(z[i] - z[j], axis=1).mean())
    return out


__all__ = [
    "ModelConfig", "SelfTrainConfig", "IterationRecord", "SelfTrainResult", "default_p",
    "select_st", "select_dst", "run_self_training", "selection_diversity",
]
