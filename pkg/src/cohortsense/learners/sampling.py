"""Synthetic minority oversampling by segment interpolation."""

from __future__ import annotations

import numpy as np

from ..core import ValidationError
from .base import Dataset


def _minority_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each minority point's k nearest minority neighbors.

    Euclidean distance; distance ties broken by lower index so results are
    stable under any input permutation of equal points.
    """
    n = points.shape[0]
    diffs = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def smote(dataset: Dataset, k_neighbors: int, seed: int) -> Dataset:
    """Add interpolated minority samples until class counts are equal.

    Each synthetic row is x + u * (x_nn - x) for a minority row x, one of
    its k nearest minority neighbors x_nn, and u uniform in [0, 1).
    Original rows are returned unchanged (order preserved), synthetics
    appended. Deterministic for a fixed seed regardless of row order.
    """
    zeros, ones = dataset.class_counts()
    if zeros == ones:
        return dataset
    minority_label = 1 if ones < zeros else 0
    n_needed = abs(zeros - ones)

    order = dataset.canonical_order()
    minority_rows = [i for i in order if dataset.labels[i] == minority_label]
    n_min = len(minority_rows)
    if n_min < 2:
        raise ValidationError(
            f"SMOTE needs at least 2 minority samples, found {n_min}"
        )
    k = min(k_neighbors, n_min - 1)

    points = dataset.vectors[minority_rows]
    neighbors = _minority_neighbors(points, k)

    rng = np.random.default_rng(seed)
    synth_vectors = np.empty((n_needed, dataset.dim))
    for i in range(n_needed):
        src = i % n_min
        nn = neighbors[src][rng.integers(0, k)]
        u = rng.random()
        synth_vectors[i] = points[src] + u * (points[nn] - points[src])

    vectors = np.vstack([dataset.vectors, synth_vectors])
    labels = np.concatenate(
        [dataset.labels, np.full(n_needed, minority_label, dtype=int)]
    )
    pids = dataset.participant_ids + tuple(
        f"synthetic_{i:05d}" for i in range(n_needed)
    )
    return Dataset(vectors=vectors, labels=labels, participant_ids=pids)
