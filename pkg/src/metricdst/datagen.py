"""Synthetic benchmark datasets: interleaving moons and hypercube clusters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DataError, largest_remainder, make_rng, round_half_up


@dataclass(frozen=True)
class MoonsSpec:
    n_samples: int = 2000
    noise_stddev: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class HypercubeSpec:
    n_samples: int = 2000
    n_features: int = 16
    n_informative: int = 16
    clusters_per_class: int = 2
    hypercube_side: float = 3.0
    cluster_stddev: float = 1.0
    seed: int = 0


def informative_count(n_features: int, fraction: float) -> int:
    """Number of informative columns for a fraction, e.g. 0.8 of 16 -> 13."""
    return max(1, round_half_up(fraction * n_features))


def generate_moons(spec: MoonsSpec) -> Dataset:
    """Two interleaving half circles with isotropic Gaussian noise.

    Class 0 sits on the upper unit half circle centred at the origin, class 1
    on the lower half circle centred at (1, 0.5).
    """
    n = spec.n_samples
    if n <= 0 or n % 2:
        raise DataError(f"n_samples must be a positive even integer, got {n}")
    if spec.noise_stddev < 0:
        raise DataError("noise_stddev must be nonnegative")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.vstack([upper, lower])
    y = np.repeat([0, 1], half)
    rng = make_rng(spec.seed, "moons")
    if spec.noise_stddev > 0:
        x = x + rng.normal(scale=spec.noise_stddev, size=x.shape)
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm])


def _pick_vertices(n_informative: int, count: int, rng) -> np.ndarray:
    """``count`` distinct vertices of the {0,1}^f cube, drawn without replacement."""
    if n_informative < 63 and count > 2 ** n_informative:
        raise DataError(
            f"{count} clusters need more than the {2 ** n_informative} hypercube vertices"
        )
    if n_informative <= 16:
        chosen = rng.choice(2 ** n_informative, size=count, replace=False)
        bits = (chosen[:, None] >> np.arange(n_informative)[None, :]) & 1
        return bits.astype(np.float64)
    seen = set()
    out = []
    while len(out) < count:
        v = rng.integers(0, 2, size=n_informative)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(v)
    return np.asarray(out, dtype=np.float64)


def generate_hypercube(spec: HypercubeSpec) -> Dataset:
    """Gaussian clusters on hypercube vertices plus redundant linear columns."""
    n, nf, f = spec.n_samples, spec.n_features, spec.n_informative
    cpc = spec.clusters_per_class
    if n <= 0 or nf <= 0 or f <= 0 or cpc <= 0:
        raise DataError("sizes must be positive")
    if f > nf:
        raise DataError("n_informative must not exceed n_features")
    if spec.hypercube_side <= 0 or spec.cluster_stddev <= 0:
        raise DataError("hypercube_side and cluster_stddev must be positive")
    n_clusters = 2 * cpc
    rng = make_rng(spec.seed, "hypercube")
    centers = (_pick_vertices(f, n_clusters, rng) - 0.5) * spec.hypercube_side
    centers = centers[rng.permutation(n_clusters)]
    # first half of the permuted centers belong to class 0
    per_class = largest_remainder(n, [1, 1])
    rows, labels = [], []
    for c in (0, 1):
        sizes = largest_remainder(per_class[c], [1] * cpc)
        for j, size in enumerate(sizes):
            center = centers[c * cpc + j]
            rows.append(center + rng.normal(scale=spec.cluster_stddev, size=(size, f)))
            labels.append(np.full(size, c))
    informative = np.vstack(rows)
    y = np.concatenate(labels)
    if nf > f:
        coef = rng.standard_normal((f, nf - f))
        x = np.hstack([informative, informative @ coef])
    else:
        x = informative
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm])


__all__ = [
    "MoonsSpec",
    "HypercubeSpec",
    "generate_moons",
    "generate_hypercube",
    "informative_count",
]
