"""Selection-bias induction on labeled index sets.

Every selector returns a sorted, duplicate-free, class-balanced list of
dataset row indices drawn from ``candidate_indices``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage

from .core import Dataset, DataError, make_rng, round_half_up

LINKAGES = ("ward", "average", "complete")


@dataclass(frozen=True)
class DeltaBiasSpec:
    delta_points: tuple = ((0.0, 0.0), (0.0, 0.0))
    n_select: int = 100
    strength: float = 2.0

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in p) for p in self.delta_points)
        if len(pts) != 2 or any(len(p) != 2 for p in pts):
            raise DataError("delta_points needs one 2-D point per class")
        object.__setattr__(self, "delta_points", pts)
        if self.n_select <= 0 or self.n_select % 2:
            raise DataError("n_select must be a positive even integer")
        if self.strength <= 0:
            raise DataError("strength must be positive")


@dataclass(frozen=True)
class HierarchyBiasSpec:
    n_select_per_class: int = 50
    bias_ratio: float = 0.9
    linkage: str = "ward"
    standardize: bool = True

    def __post_init__(self):
        if self.n_select_per_class <= 0:
            raise DataError("n_select_per_class must be positive")
        if not 0.0 <= self.bias_ratio <= 1.0:
            raise DataError("bias_ratio must lie in [0, 1]")
        if self.linkage not in LINKAGES:
            raise DataError(f"linkage must be one of {LINKAGES}")


def _per_class(dataset: Dataset, candidate_indices):
    labels = dataset.require_labels()
    cand = np.unique(np.asarray(candidate_indices, dtype=np.int64))
    return {c: cand[labels[cand] == c] for c in (0, 1)}


def delta_weights(points, delta, strength: float) -> np.ndarray:
    """Unnormalised selection weight ``exp(-strength * L1(x - delta))``."""
    p = np.asarray(points, dtype=np.float64)
    return np.exp(-strength * np.abs(p - np.asarray(delta)).sum(axis=1))


def weighted_sample_without_replacement(weights_log, m: int, rng) -> np.ndarray:
    """Positions of ``m`` items drawn by successive weighted sampling.

    Exponential-keys method: with ``u ~ U(0,1)`` the key ``u ** (1 / w)``
    is ranked in the log domain as ``log(-log u) - log w`` (smallest first),
    which stays finite for weights far below the float range.
    """
    lw = np.asarray(weights_log, dtype=np.float64)
    u = rng.random(lw.shape[0])
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    keys = np.log(-np.log(u)) - lw
    return np.argsort(keys, kind="stable")[:m]


def delta_bias_select(dataset: Dataset, candidate_indices, spec: DeltaBiasSpec,
                      seed: int) -> list:
    if dataset.n_features != 2:
        raise DataError("delta bias applies to 2-D datasets only")
    members = _per_class(dataset, candidate_indices)
    half = spec.n_select // 2
    rng = make_rng(seed, "delta_bias")
    out = []
    for c in (0, 1):
        cand = members[c]
        if len(cand) < half:
            raise DataError(f"class {c} has {len(cand)} candidates, need {half}")
        pts = dataset.features[cand]
        log_w = -spec.strength * np.abs(pts - np.asarray(spec.delta_points[c])).sum(axis=1)
        out.append(cand[weighted_sample_without_replacement(log_w, half, rng)])
    return sorted(int(i) for i in np.concatenate(out))


def first_cluster_of_size(points, k: int, method: str = "ward") -> np.ndarray:
    """Members (row positions) of the first merged cluster with >= k points."""
    n = points.shape[0]
    if k > n:
        raise DataError(f"cannot form a cluster of {k} from {n} points")
    if k <= 1:
        return np.array([0])
    tree = linkage(points, method=method, metric="euclidean")
    children = {}
    for step, (a, b, _, size) in enumerate(tree):
        node = n + step
        children[node] = (int(a), int(b))
        if size >= k:
            members, stack = [], [node]
            while stack:
                cur = stack.pop()
                if cur < n:
                    members.append(cur)
                else:
                    stack.extend(children[cur])
            return np.sort(np.asarray(members, dtype=np.int64))
    raise AssertionError("linkage finished without reaching k points")


def _standardize(x):
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def hierarchy_bias_select(dataset: Dataset, candidate_indices, spec: HierarchyBiasSpec,
                          seed: int, return_clusters: bool = False):
    """Per class: cluster, then take ``round(k*b)`` from the first cluster of
    size >= k and the rest uniformly from outside it.

    If fewer candidates lie outside the cluster than the complement needs,
    the shortfall is drawn from the cluster's unselected members.
    """
    k = spec.n_select_per_class
    members = _per_class(dataset, candidate_indices)
    rng = make_rng(seed, "hierarchy_bias")
    out, clusters = [], {}
    n_in = round_half_up(k * spec.bias_ratio)
    for c in (0, 1):
        cand = members[c]
        if len(cand) < k:
            raise DataError(f"class {c} has {len(cand)} candidates, fewer than k={k}")
        x = dataset.features[cand]
        if spec.standardize:
            x = _standardize(x)
        pos = first_cluster_of_size(x, k, spec.linkage)
        cluster = cand[pos]
        rest = np.setdiff1d(cand, cluster)
        clusters[c] = cluster
        inside = rng.choice(cluster, size=n_in, replace=False)
        n_out = k - n_in
        if n_out > len(rest):
            spare = np.setdiff1d(cluster, inside)
            outside = np.concatenate([rest, rng.choice(spare, size=n_out - len(rest),
                                                       replace=False)])
        else:
            outside = rng.choice(rest, size=n_out, replace=False)
        out.append(np.concatenate([inside, outside]))
    selected = sorted(int(i) for i in np.concatenate(out))
    if return_clusters:
        return selected, clusters
    return selected


def random_select(candidate_indices, dataset: Dataset, n_select: int, seed: int) -> list:
    """Class-balanced uniform selection without replacement."""
    if n_select <= 0 or n_select % 2:
        raise DataError("n_select must be a positive even integer")
    members = _per_class(dataset, candidate_indices)
    half = n_select // 2
    rng = make_rng(seed, "random_select")
    out = []
    for c in (0, 1):
        if len(members[c]) < half:
            raise DataError(f"class {c} has {len(members[c])} candidates, need {half}")
        out.append(rng.choice(members[c], size=half, replace=False))
    return sorted(int(i) for i in np.concatenate(out))
