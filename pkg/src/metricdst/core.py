"""Shared data carriers, seeded RNG streams and split bookkeeping."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for invalid user-supplied data or parameters."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional binary labels and sample ids.

    ``labels`` may contain ``-1`` for rows without a label (unlabeled rows
    read from file); all other entries must be 0 or 1.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    ids: Optional[tuple] = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise DataError(
                    f"labels length {y.shape} does not match {x.shape[0]} samples"
                )
            bad = ~np.isin(y, (-1, 0, 1))
            if bad.any():
                raise DataError(f"non-binary label {y[bad][0]!r}")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        ids = self.ids
        if ids is None:
            ids = tuple(f"s{i}" for i in range(x.shape[0]))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != x.shape[0]:
                raise DataError("ids length does not match number of samples")
        object.__setattr__(self, "ids", ids)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("dataset has no labels")
        return self.labels

    def labeled_indices(self) -> np.ndarray:
        if self.labels is None:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.labels >= 0)

    def unlabeled_indices(self) -> np.ndarray:
        if self.labels is None:
            return np.arange(self.n_samples)
        return np.flatnonzero(self.labels < 0)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, tuple(self.ids[i] for i in idx))


@dataclass(frozen=True)
class SplitIndices:
    train: tuple
    test: tuple
    labeled: tuple = ()
    unlabeled: tuple = ()
    validation: Optional[tuple] = None

    def check(self, n_samples: int) -> None:
        """Raise ``AssertionError`` if any bookkeeping invariant is broken."""
        lists = [self.train, self.test, self.labeled, self.unlabeled]
        if self.validation is not None:
            lists.append(self.validation)
        for lst in lists:
            assert len(set(lst)) == len(lst), "duplicate index"
            assert all(0 <= i < n_samples for i in lst), "index out of range"
        train = set(self.train)
        assert not train & set(self.test)
        assert not set(self.labeled) & set(self.unlabeled)
        assert set(self.labeled) | set(self.unlabeled) <= train


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("rng keys must be nonnegative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Counter-based generator for the stream named by ``(seed, *keys)``.

    Streams with different keys are statistically independent, so e.g. a
    fold's stream does not depend on the order folds are evaluated in.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit child seed for the named sub-stream."""
    return int(make_rng(seed, *keys).integers(0, 2 ** 63 - 1))


def round_half_up(x: float) -> int:
    # the epsilon keeps products like 0.3 * 1800 = 540.0000000000001 stable
    return int(math.floor(x + 0.5 + 1e-9))


def largest_remainder(total: int, weights: Sequence[float]) -> list:
    """Split integer ``total`` proportionally to ``weights``.

    Remainders are awarded by decreasing fractional part; ties go to the
    lower position. The result sums exactly to ``total``.
    """
    w = np.asarray(weights, dtype=np.float64)
    exact = total * w / w.sum()
    base = np.floor(exact + 1e-9).astype(np.int64)
    short = total - int(base.sum())
    frac = exact - base
    order = sorted(range(len(w)), key=lambda i: (-round(frac[i], 12), i))
    for i in order[:short]:
        base[i] += 1
    return [int(b) for b in base]


def _class_members(labels: np.ndarray, indices: np.ndarray) -> dict:
    return {c: indices[labels[indices] == c] for c in (0, 1)}


def stratified_kfold(dataset: Dataset, n_folds: int, seed: int) -> list:
    """Stratified k-fold partition; returns one :class:`SplitIndices` per fold."""
    if n_folds < 2:
        raise DataError("n_folds must be at least 2")
    labels = dataset.require_labels()
    idx = dataset.labeled_indices()
    members = _class_members(labels, idx)
    for c, m in members.items():
        if len(m) < n_folds:
            raise DataError(
                f"class {c} has {len(m)} samples, fewer than n_folds={n_folds}"
            )
    rng = make_rng(seed, "kfold")
    # deal shuffled class members round-robin, continuing the offset across
    # classes so fold sizes differ by at most one
    ordered = np.concatenate([rng.permutation(members[0]), rng.permutation(members[1])])
    fold_of = np.arange(len(ordered)) % n_folds
    splits = []
    for f in range(n_folds):
        test = np.sort(ordered[fold_of == f])
        train = np.sort(ordered[fold_of != f])
        splits.append(SplitIndices(train=tuple(int(i) for i in train),
                                   test=tuple(int(i) for i in test)))
    return splits


def stratified_sample(labels: np.ndarray, indices, n_total: int, rng) -> np.ndarray:
    """Draw ``n_total`` of ``indices`` with class quotas by largest remainder."""
    indices = np.asarray(indices, dtype=np.int64)
    members = _class_members(labels, indices)
    quotas = largest_remainder(n_total, [len(members[0]), len(members[1])])
    picked = []
    for c, q in zip((0, 1), quotas):
        if q == 0:
            raise DataError(f"split would contain 0 samples of class {c}")
        picked.append(rng.choice(members[c], size=q, replace=False))
    return np.sort(np.concatenate(picked))


def labeled_unlabeled_split(train_indices, labeled_fraction: float, dataset: Dataset,
                            seed: int, test_indices=()) -> SplitIndices:
    """Stratified labeled/unlabeled split of a train index list."""
    if not 0.0 < labeled_fraction < 1.0:
        raise DataError("labeled_fraction must lie strictly between 0 and 1")
    train = np.asarray(train_indices, dtype=np.int64)
    if train.size == 0:
        raise DataError("train_indices is empty")
    labels = dataset.require_labels()
    n_lab = round_half_up(labeled_fraction * train.size)
    labeled = stratified_sample(labels, train, n_lab, make_rng(seed, "labeled"))
    unlabeled = np.setdiff1d(train, labeled)
    return SplitIndices(
        train=tuple(int(i) for i in train),
        test=tuple(int(i) for i in test_indices),
        labeled=tuple(int(i) for i in labeled),
        unlabeled=tuple(int(i) for i in unlabeled),
    )


def holdout_split(indices, fraction: float, labels: np.ndarray, seed: int, *keys):
    """Stratified holdout: returns ``(kept, held_out)`` sorted index arrays."""
    indices = np.asarray(indices, dtype=np.int64)
    n_out = round_half_up(fraction * indices.size)
    held = stratified_sample(labels, indices, n_out, make_rng(seed, "holdout", *keys))
    return np.setdiff1d(indices, held), held


def undersample_to_balance(dataset: Dataset, indices, seed: int) -> list:
    """Randomly drop majority-class indices until both classes are equal."""
    labels = dataset.require_labels()
    idx = np.asarray(indices, dtype=np.int64)
    members = _class_members(labels, idx)
    for c, m in members.items():
        if len(m) == 0:
            raise DataError(f"class {c} absent; cannot balance")
    n = min(len(members[0]), len(members[1]))
    rng = make_rng(seed, "undersample")
    out = []
    for c in (0, 1):
        m = members[c]
        out.append(m if len(m) == n else rng.choice(m, size=n, replace=False))
    return sorted(int(i) for i in np.concatenate(out))
