"""Generic and per-cohort model sets, weekly refresh, and multi-model voting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterSnapshot
from .core import EngineConfig, LearnerConfig, ValidationError
from .learners import (
    Dataset,
    Metrics,
    compute_metrics,
    kfold_cv,
    model_from_json,
    model_to_json,
    smote,
    train_gbt,
    train_linear_svm,
    train_logreg,
    train_random_forest,
)
from .learners.base import KIND_ORDER, ModelKind, derive_seed

log = logging.getLogger(__name__)

GENERIC_SCOPE = "generic"


@dataclass(frozen=True)
class LabeledRow:
    """One training/evaluation row: a participant-week vector plus label."""

    point_id: str
    participant_id: str
    week: int
    vector: np.ndarray
    label: int


@dataclass
class ModelSet:
    """All four trained kinds for one scope, with validation scores."""

    scope: str  # GENERIC_SCOPE or a cohort label
    models: dict[ModelKind, object]
    validation_f1: dict[ModelKind, float]
    trained_through_week: int
    input_dim: int
    trained_on: tuple[str, ...] = ()  # point ids, provenance

    def __post_init__(self) -> None:
        if set(self.models) != set(KIND_ORDER):
            raise ValidationError("a model set must hold all four kinds")


@dataclass
class ModelPool:
    generic: ModelSet | None = None
    specialized: dict[str, ModelSet] = field(default_factory=dict)
    min_cohort_size: int = 15
    min_class_count: int = 5


@dataclass(frozen=True)
class VoteOutcome:
    prediction: int
    tally: dict[str, int]  # voter name -> vote
    rule_used: str  # majority | weighted_f1 | generic_only


@dataclass(frozen=True)
class EvalRow:
    scope: str  # generic | specialized | voting
    cohort: str  # cohort label for specialized rows, else ""
    kind: str  # model kind value, or "ensemble"
    metrics: Metrics


def _dataset(rows: list[LabeledRow]) -> Dataset:
    # point ids are unique and sort by (participant, week); using them as the
    # dataset's row ids gives every seeded learner a canonical ordering
    return Dataset(
        vectors=np.array([r.vector for r in rows], dtype=float),
        labels=np.array([r.label for r in rows], dtype=int),
        participant_ids=tuple(r.point_id for r in rows),
    )


def _train_kind(
    kind: ModelKind,
    dataset: Dataset,
    seed: int,
    lc: LearnerConfig,
    init: object | None = None,
):
    if kind is ModelKind.LOGREG:
        return train_logreg(
            dataset,
            seed,
            iterations=lc.logreg_iterations,
            step=lc.logreg_step,
            l2=lc.logreg_l2,
            init=init,
        )
    if kind is ModelKind.LINEAR_SVM:
        return train_linear_svm(
            dataset, seed, epochs=lc.svm_epochs, l2=lc.svm_l2, init=init
        )
    if kind is ModelKind.RANDOM_FOREST:
        return train_random_forest(
            dataset, seed, n_trees=lc.forest_trees, max_depth=lc.forest_depth
        )
    if kind is ModelKind.GBT:
        return train_gbt(
            dataset,
            seed,
            n_rounds=lc.gbt_rounds,
            max_depth=lc.gbt_depth,
            learning_rate=lc.gbt_learning_rate,
        )
    raise AssertionError(f"unhandled kind {kind}")


def _balanced(dataset: Dataset, config: EngineConfig, seed: int) -> Dataset:
    zeros, ones = dataset.class_counts()
    if zeros != ones and min(zeros, ones) >= 2:
        return smote(dataset, config.smote_neighbors, seed)
    return dataset


def _fit_set(
    scope: str,
    rows: list[LabeledRow],
    config: EngineConfig,
    seed: int,
    week: int,
    previous: ModelSet | None,
) -> tuple[ModelSet, list[str]]:
    """Train all four kinds with k-fold validation scores.

    SMOTE is applied inside training folds during validation and to the
    full data for the deployed fit. Linear kinds warm-start from the
    previous week's parameters.
    """
    events: list[str] = []
    dataset = _dataset(rows)
    zeros, ones = dataset.class_counts()
    k = min(config.cv_folds, zeros, ones)

    models: dict[ModelKind, object] = {}
    scores: dict[ModelKind, float] = {}
    for kind in KIND_ORDER:
        kind_seed = derive_seed(config.rng_seed, "train", scope, kind.value, seed)
        init = None
        if previous is not None and kind in (ModelKind.LOGREG, ModelKind.LINEAR_SVM):
            prior = previous.models.get(kind)
            if prior is not None and previous.input_dim == dataset.dim:
                init = prior

        def train_fn(ds: Dataset, fold_seed: int, _kind=kind, _init=init):
            return _train_kind(_kind, ds, fold_seed, config.learners, init=_init)

        if k >= 2:
            metrics = kfold_cv(
                dataset,
                k,
                train_fn,
                derive_seed(kind_seed, "cv"),
                smote_neighbors=config.smote_neighbors,
            )
            scores[kind] = metrics.f1
        else:
            # too few rows in one class for any fold split: score on the
            # training data itself and say so
            events.append(
                f"{scope}: class counts {zeros}/{ones} too small for CV; "
                f"validation_f1 for {kind.value} uses training predictions"
            )
            interim = _train_kind(
                kind,
                _balanced(dataset, config, derive_seed(kind_seed, "smote")),
                kind_seed,
                config.learners,
                init=init,
            )
            scores[kind] = compute_metrics(
                interim.predict(dataset.vectors), dataset.labels
            ).f1
        models[kind] = _train_kind(
            kind,
            _balanced(dataset, config, derive_seed(kind_seed, "smote")),
            kind_seed,
            config.learners,
            init=init,
        )
    model_set = ModelSet(
        scope=scope,
        models=models,
        validation_f1=scores,
        trained_through_week=week,
        input_dim=dataset.dim,
        trained_on=tuple(sorted(r.point_id for r in rows)),
    )
    return model_set, events


def refresh_generic(
    pool: ModelPool,
    rows: list[LabeledRow],
    config: EngineConfig,
    seed: int,
    week: int,
) -> tuple[ModelPool, list[str]]:
    """Retrain the generic set on cumulative labeled data.

    Single-class data leaves the pool untouched (warning logged): there is
    nothing a binary classifier can learn from it yet.
    """
    labels = {r.label for r in rows}
    if labels != {0, 1}:
        message = (
            f"week {week}: generic refresh skipped, cumulative data is "
            f"single-class ({sorted(labels)})"
        )
        log.warning(message)
        return pool, [message]
    model_set, events = _fit_set(
        GENERIC_SCOPE, rows, config, seed, week, previous=pool.generic
    )
    new_pool = ModelPool(
        generic=model_set,
        specialized=dict(pool.specialized),
        min_cohort_size=pool.min_cohort_size,
        min_class_count=pool.min_class_count,
    )
    return new_pool, events


def refresh_specialized(
    pool: ModelPool,
    snapshot: ClusterSnapshot,
    rows: list[LabeledRow],
    config: EngineConfig,
    seed: int,
    week: int,
) -> tuple[ModelPool, list[str]]:
    """(Re)train one set per sufficiently large, two-class cohort.

    Cohorts absent from the snapshot keep their last set frozen; undersized
    or single-class-dominated cohorts are skipped with a log entry.
    """
    events: list[str] = []
    specialized = dict(pool.specialized)
    by_point = {r.point_id: r for r in rows}
    for label in sorted(snapshot.cohorts):
        members = snapshot.cohorts[label]
        if len(members) < pool.min_cohort_size:
            events.append(
                f"week {week}: cohort {label} has {len(members)} members, "
                f"below min_cohort_size {pool.min_cohort_size}; no specialized set"
            )
            continue
        cohort_rows = [by_point[p] for p in sorted(members) if p in by_point]
        ones = sum(r.label for r in cohort_rows)
        zeros = len(cohort_rows) - ones
        if min(zeros, ones) < pool.min_class_count:
            events.append(
                f"week {week}: cohort {label} class counts {zeros}/{ones} below "
                f"min_class_count {pool.min_class_count}; no specialized set"
            )
            continue
        model_set, fit_events = _fit_set(
            label,
            cohort_rows,
            config,
            derive_seed(seed, label),
            week,
            previous=specialized.get(label),
        )
        specialized[label] = model_set
        events.extend(fit_events)
    new_pool = ModelPool(
        generic=pool.generic,
        specialized=specialized,
        min_cohort_size=pool.min_cohort_size,
        min_class_count=pool.min_class_count,
    )
    return new_pool, events


def vote(
    pool: ModelPool,
    vector: np.ndarray,
    assignment: str | None,
    config: EngineConfig,
) -> VoteOutcome:
    """Majority vote over the generic set plus the cohort's specialized set.

    A tie is broken by summing each side's validation F1 weights; a
    persisting tie predicts lonely (1): in a screening setting false
    negatives cost more. Noise assignments and cohorts without a live set
    vote generic-only.
    """
    if pool.generic is None:
        raise ValidationError("cannot vote before the generic set exists")
    x = np.asarray(vector, dtype=float).ravel()
    if x.shape[0] != pool.generic.input_dim:
        raise ValidationError(
            f"vector dimension {x.shape[0]} does not match model dimension "
            f"{pool.generic.input_dim}"
        )
    voters: list[tuple[str, object, float]] = []
    for kind in KIND_ORDER:
        voters.append(
            (
                f"generic:{kind.value}",
                pool.generic.models[kind],
                pool.generic.validation_f1[kind],
            )
        )
    specialized = (
        pool.specialized.get(assignment) if assignment is not None else None
    )
    if specialized is not None:
        for kind in KIND_ORDER:
            voters.append(
                (
                    f"{assignment}:{kind.value}",
                    specialized.models[kind],
                    specialized.validation_f1[kind],
                )
            )

    tally: dict[str, int] = {}
    weights: dict[str, float] = {}
    for name, model, f1 in voters:
        tally[name] = int(model.predict(x[None, :])[0])
        weights[name] = f1

    ones = sum(tally.values())
    zeros = len(tally) - ones
    if specialized is None:
        rule = "generic_only"
    elif ones != zeros:
        rule = "majority"
    else:
        rule = "weighted_f1"

    if ones != zeros:
        prediction = 1 if ones > zeros else 0
    else:
        weight_one = sum(weights[n] for n, v in tally.items() if v == 1)
        weight_zero = sum(weights[n] for n, v in tally.items() if v == 0)
        if weight_one > weight_zero:
            prediction = 1
        elif weight_zero > weight_one:
            prediction = 0
        else:
            prediction = 1
    return VoteOutcome(prediction=prediction, tally=tally, rule_used=rule)


def evaluate_week(
    pool: ModelPool,
    holdout: list[tuple[LabeledRow, str | None]],
    snapshot: ClusterSnapshot,
    config: EngineConfig,
) -> list[EvalRow]:
    """Metrics for generic kinds, each live specialized set, and voting.

    ``holdout`` pairs each labeled row with its cluster assignment (cohort
    label or None for noise).
    """
    if not holdout:
        raise ValidationError("cannot evaluate an empty hold-out set")
    if pool.generic is None:
        raise ValidationError("cannot evaluate before the generic set exists")

    rows = [r for r, _ in holdout]
    X = np.array([r.vector for r in rows], dtype=float)
    y = np.array([r.label for r in rows], dtype=int)

    out: list[EvalRow] = []
    for kind in KIND_ORDER:
        preds = pool.generic.models[kind].predict(X)
        out.append(
            EvalRow(
                scope="generic",
                cohort="",
                kind=kind.value,
                metrics=compute_metrics(preds, y),
            )
        )

    for label in sorted(pool.specialized):
        model_set = pool.specialized[label]
        idx = [i for i, (_, a) in enumerate(holdout) if a == label]
        if not idx:
            continue
        for kind in KIND_ORDER:
            preds = model_set.models[kind].predict(X[idx])
            out.append(
                EvalRow(
                    scope="specialized",
                    cohort=label,
                    kind=kind.value,
                    metrics=compute_metrics(preds, y[idx]),
                )
            )

    vote_preds = np.array(
        [vote(pool, row.vector, assignment, config).prediction for row, assignment in holdout],
        dtype=int,
    )
    out.append(
        EvalRow(
            scope="voting",
            cohort="",
            kind="ensemble",
            metrics=compute_metrics(vote_preds, y),
        )
    )
    return out


# ---------------------------------------------------------------- persistence


def _set_to_json(model_set: ModelSet) -> dict:
    return {
        "scope": model_set.scope,
        "trained_through_week": model_set.trained_through_week,
        "input_dim": model_set.input_dim,
        "validation_f1": {k.value: v for k, v in model_set.validation_f1.items()},
        "models": {k.value: model_to_json(m) for k, m in model_set.models.items()},
        "trained_on": list(model_set.trained_on),
    }


def _set_from_json(doc: dict) -> ModelSet:
    return ModelSet(
        scope=doc["scope"],
        models={ModelKind(k): model_from_json(m) for k, m in doc["models"].items()},
        validation_f1={ModelKind(k): float(v) for k, v in doc["validation_f1"].items()},
        trained_through_week=int(doc["trained_through_week"]),
        input_dim=int(doc["input_dim"]),
        trained_on=tuple(doc["trained_on"]),
    )


def pool_to_json(pool: ModelPool) -> dict:
    return {
        "generic": None if pool.generic is None else _set_to_json(pool.generic),
        "specialized": {
            label: _set_to_json(s) for label, s in sorted(pool.specialized.items())
        },
        "min_cohort_size": pool.min_cohort_size,
        "min_class_count": pool.min_class_count,
    }


def pool_from_json(doc: dict) -> ModelPool:
    return ModelPool(
        generic=None if doc["generic"] is None else _set_from_json(doc["generic"]),
        specialized={
            label: _set_from_json(s) for label, s in doc["specialized"].items()
        },
        min_cohort_size=int(doc["min_cohort_size"]),
        min_class_count=int(doc["min_class_count"]),
    )
