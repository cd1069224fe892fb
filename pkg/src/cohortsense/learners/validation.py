"""Classification metrics and stratified k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import ValidationError
from .base import Dataset, derive_seed
from .sampling import smote


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def as_row(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def compute_metrics(predictions, labels) -> Metrics:
    """Confusion-matrix metrics with documented degenerate rules.

    With no positive predictions, precision is 1.0 when there are also no
    positive labels and 0.0 otherwise; recall is symmetric. F1 is 0 when
    precision + recall is 0.
    """
    preds = np.asarray(predictions, dtype=int)
    labs = np.asarray(labels, dtype=int)
    if preds.shape != labs.shape or preds.ndim != 1:
        raise ValidationError(
            f"predictions and labels must be equal-length 1-D, got "
            f"{preds.shape} vs {labs.shape}"
        )
    if len(preds) == 0:
        raise ValidationError("cannot compute metrics on empty inputs")

    tp = int(((preds == 1) & (labs == 1)).sum())
    fp = int(((preds == 1) & (labs == 0)).sum())
    fn = int(((preds == 0) & (labs == 1)).sum())
    tn = int(((preds == 0) & (labs == 0)).sum())

    accuracy = (tp + tn) / len(preds)
    if tp + fp == 0:
        precision = 1.0 if tp + fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0 if tp + fp == 0 else 0.0
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Metrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


def stratified_folds(dataset: Dataset, k: int, seed: int) -> list[np.ndarray]:
    """Partition row indices into k stratified folds of near-equal size.

    Rows are canonicalized and shuffled per class with the given seed;
    per-class remainders go to the currently smallest folds, keeping all
    fold sizes within one of each other.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    counts = dataset.class_counts()
    for label, count in enumerate(counts):
        if 0 < count < k:
            raise ValidationError(
                f"class {label} has {count} rows, fewer than k={k}; "
                f"use k <= {count}"
            )
    order = dataset.canonical_order()
    rng = np.random.default_rng(derive_seed(seed, "folds"))

    folds: list[list[int]] = [[] for _ in range(k)]
    for label in (0, 1):
        rows = np.array([i for i in order if dataset.labels[i] == label], dtype=int)
        if len(rows) == 0:
            continue
        rng.shuffle(rows)
        base, extra = divmod(len(rows), k)
        quota = np.full(k, base, dtype=int)
        # hand the remainder to the smallest folds so far (ties: low index)
        sizes = np.array([len(f) for f in folds])
        for j in np.argsort(sizes, kind="stable")[:extra]:
            quota[j] += 1
        pos = 0
        for j in range(k):
            folds[j].extend(rows[pos : pos + quota[j]].tolist())
            pos += quota[j]
    return [np.array(sorted(f), dtype=int) for f in folds]


def kfold_cv(
    dataset: Dataset,
    k: int,
    train_fn: Callable[[Dataset, int], object],
    seed: int,
    smote_neighbors: int | None = None,
) -> Metrics:
    """Stratified k-fold CV; metrics pooled over all test predictions.

    When ``smote_neighbors`` is set, SMOTE rebalances each training fold
    (never the test fold) before ``train_fn`` runs.
    """
    folds = stratified_folds(dataset, k, seed)
    n = len(dataset)
    all_preds = np.empty(n, dtype=int)
    tested = np.zeros(n, dtype=bool)

    for j, test_idx in enumerate(folds):
        if len(test_idx) == 0:
            continue
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        train_ds = dataset.subset(np.nonzero(train_mask)[0])
        if smote_neighbors is not None:
            zeros, ones = train_ds.class_counts()
            if zeros != ones and min(zeros, ones) >= 2:
                train_ds = smote(train_ds, smote_neighbors, derive_seed(seed, "smote", j))
        model = train_fn(train_ds, derive_seed(seed, "fold", j))
        all_preds[test_idx] = model.predict(dataset.vectors[test_idx])
        tested[test_idx] = True

    if not tested.all():
        raise AssertionError("every row must appear in exactly one test fold")
    return compute_metrics(all_preds, dataset.labels)
