"""Tests for model pools, weekly refresh, and multi-model voting."""

import numpy as np
import pytest

from cohortsense.cluster import ClusterSnapshot
from cohortsense.core import EngineConfig, LearnerConfig, ValidationError
from cohortsense.ensemble import (
    GENERIC_SCOPE,
    LabeledRow,
    ModelPool,
    ModelSet,
    evaluate_week,
    pool_from_json,
    pool_to_json,
    refresh_generic,
    refresh_specialized,
    vote,
)
from cohortsense.learners.base import KIND_ORDER, ModelKind

FAST = LearnerConfig(
    logreg_iterations=120,
    svm_epochs=120,
    forest_trees=12,
    forest_depth=4,
    gbt_rounds=15,
)


def config(**kwargs):
    return EngineConfig(cv_folds=kwargs.pop("cv_folds", 3), learners=FAST, **kwargs)


def make_rows(vectors, labels, week=1, prefix="P"):
    return [
        LabeledRow(
            point_id=f"{prefix}{i:03d}|w{week:02d}",
            participant_id=f"{prefix}{i:03d}",
            week=week,
            vector=np.asarray(v, dtype=float),
            label=int(lab),
        )
        for i, (v, lab) in enumerate(zip(vectors, labels))
    ]


def two_class_rows(n_per_class=20, gap=3.0, seed=0, week=1):
    rng = np.random.default_rng(seed)
    neg = rng.normal((-gap / 2, 0.0), 0.4, size=(n_per_class, 2))
    pos = rng.normal((gap / 2, 0.0), 0.4, size=(n_per_class, 2))
    return make_rows(np.vstack([neg, pos]), [0] * n_per_class + [1] * n_per_class, week)


class _StubModel:
    """Constant-vote stand-in for voting-logic tests."""

    def __init__(self, prediction):
        self.prediction = prediction

    def predict(self, X):
        return np.full(len(X), self.prediction, dtype=int)


def stub_set(scope, votes, f1s, week=1, dim=2):
    return ModelSet(
        scope=scope,
        models={k: _StubModel(v) for k, v in zip(KIND_ORDER, votes)},
        validation_f1={k: f for k, f in zip(KIND_ORDER, f1s)},
        trained_through_week=week,
        input_dim=dim,
    )


# ---------------------------------------------------------------- refresh


def test_refresh_generic_builds_four_models():
    pool, events = refresh_generic(
        ModelPool(), two_class_rows(), config(), seed=0, week=1
    )
    assert pool.generic is not None
    assert set(pool.generic.models) == set(KIND_ORDER)
    assert pool.generic.trained_through_week == 1
    assert all(0.0 <= f <= 1.0 for f in pool.generic.validation_f1.values())


def test_refresh_generic_single_class_unchanged():
    rows = make_rows(np.random.default_rng(0).normal(size=(10, 2)), [1] * 10)
    pool = ModelPool()
    out, events = refresh_generic(pool, rows, config(), seed=0, week=1)
    assert out.generic is None
    assert any("single-class" in e for e in events)


def test_refresh_generic_deterministic():
    rows = two_class_rows(seed=3)
    p1, _ = refresh_generic(ModelPool(), rows, config(), seed=5, week=1)
    p2, _ = refresh_generic(ModelPool(), rows, config(), seed=5, week=1)
    assert p1.generic.validation_f1 == p2.generic.validation_f1
    assert pool_to_json(p1) == pool_to_json(p2)


def test_refresh_generic_f1_nondecreasing_on_growing_separable_data():
    cfg = config()
    pool = ModelPool()
    prev_f1 = None
    rows = []
    for week in range(1, 4):
        rows = rows + two_class_rows(n_per_class=25, gap=4.0, seed=week, week=week)
        pool, _ = refresh_generic(pool, rows, cfg, seed=0, week=week)
        f1 = pool.generic.validation_f1[ModelKind.LOGREG]
        if prev_f1 is not None:
            assert f1 >= prev_f1 - 0.02
        prev_f1 = f1


def test_refresh_specialized_gates_small_cohorts():
    rows = two_class_rows(n_per_class=10)
    members = frozenset(r.point_id for r in rows[:10])
    snapshot = ClusterSnapshot(week=1, cohorts={"G1": members}, noise=frozenset())
    pool, events = refresh_specialized(
        ModelPool(min_cohort_size=15), snapshot, rows, config(), seed=0, week=1
    )
    assert pool.specialized == {}
    assert any("below min_cohort_size" in e for e in events)


def test_refresh_specialized_gates_single_class_cohorts():
    rows = two_class_rows(n_per_class=20)
    all_negative = frozenset(r.point_id for r in rows if r.label == 0)
    snapshot = ClusterSnapshot(week=1, cohorts={"G1": all_negative}, noise=frozenset())
    pool, events = refresh_specialized(
        ModelPool(), snapshot, rows, config(), seed=0, week=1
    )
    assert pool.specialized == {}
    assert any("min_class_count" in e for e in events)


def test_refresh_specialized_trains_only_on_cohort_rows():
    rows = two_class_rows(n_per_class=20, seed=9)
    members = frozenset(r.point_id for r in rows if int(r.point_id[1:4]) % 2 == 0)
    snapshot = ClusterSnapshot(week=1, cohorts={"G1": members}, noise=frozenset())
    pool, _ = refresh_specialized(
        ModelPool(min_cohort_size=5, min_class_count=3),
        snapshot,
        rows,
        config(),
        seed=0,
        week=1,
    )
    assert "G1" in pool.specialized
    assert set(pool.specialized["G1"].trained_on) <= set(members)


def test_refresh_specialized_keeps_vanished_sets_frozen():
    rows = two_class_rows(n_per_class=20, seed=4)
    members = frozenset(r.point_id for r in rows)
    snap1 = ClusterSnapshot(week=1, cohorts={"G2": members}, noise=frozenset())
    cfg = config()
    pool, _ = refresh_specialized(
        ModelPool(min_cohort_size=5, min_class_count=3), snap1, rows, cfg, seed=0, week=1
    )
    assert pool.specialized["G2"].trained_through_week == 1
    # G2 vanishes in week 2: its set must stay exactly as trained
    snap2 = ClusterSnapshot(week=2, cohorts={}, noise=members)
    pool2, _ = refresh_specialized(pool, snap2, rows, cfg, seed=0, week=2)
    assert pool2.specialized["G2"].trained_through_week == 1
    assert pool_to_json(pool2)["specialized"]["G2"] == pool_to_json(pool)["specialized"]["G2"]


def test_specialized_beats_generic_on_planted_group_structure():
    """Two planted groups with opposite label directions: pooling hurts."""
    rng = np.random.default_rng(11)
    rows = []
    i = 0
    for center, direction in (((0.0, 0.0), +1.0), ((6.0, 6.0), -1.0)):
        for _ in range(30):
            label = int(rng.random() < 0.5)
            offset = direction * (1.0 if label else -1.0)
            vec = rng.normal(center, 0.3, 2) + np.array([offset, 0.0])
            rows.append(
                LabeledRow(
                    point_id=f"P{i:03d}|w01",
                    participant_id=f"P{i:03d}",
                    week=1,
                    vector=vec,
                    label=label,
                )
            )
            i += 1
    cfg = config()
    g1 = frozenset(r.point_id for r in rows[:30])
    snapshot = ClusterSnapshot(
        week=1, cohorts={"G1": g1, "G2": frozenset(r.point_id for r in rows[30:])},
        noise=frozenset(),
    )
    pool, _ = refresh_generic(ModelPool(min_cohort_size=10), rows, cfg, seed=0, week=1)
    pool, _ = refresh_specialized(pool, snapshot, rows, cfg, seed=0, week=1)
    g1_f1 = pool.specialized["G1"].validation_f1[ModelKind.LOGREG]
    generic_f1 = pool.generic.validation_f1[ModelKind.LOGREG]
    assert g1_f1 >= generic_f1 - 0.02


# ---------------------------------------------------------------- voting


def test_vote_majority_with_eight_voters():
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [1, 1, 1, 0], [0.5] * 4),
        specialized={"G1": stub_set("G1", [1, 1, 0, 0], [0.5] * 4)},
    )
    outcome = vote(pool, np.zeros(2), "G1", config())
    assert outcome.prediction == 1
    assert outcome.rule_used == "majority"
    assert len(outcome.tally) == 8
    assert sum(outcome.tally.values()) == 5


def test_vote_noise_routes_generic_only():
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [0, 0, 1, 0], [0.5] * 4),
        specialized={"G1": stub_set("G1", [1, 1, 1, 1], [0.9] * 4)},
    )
    outcome = vote(pool, np.zeros(2), None, config())
    assert len(outcome.tally) == 4
    assert outcome.rule_used == "generic_only"
    assert outcome.prediction == 0


def test_vote_missing_specialized_set_routes_generic_only():
    pool = ModelPool(generic=stub_set(GENERIC_SCOPE, [1, 1, 0, 0], [0.6, 0.6, 0.5, 0.4]))
    outcome = vote(pool, np.zeros(2), "G9", config())
    assert len(outcome.tally) == 4
    assert outcome.rule_used == "generic_only"
    # internal 2-2 tie: weights 1.2 for ones vs 0.9 for zeros
    assert outcome.prediction == 1


def test_vote_weighted_tie_break_hand_computed():
    # 4-4 tie; zeros carry weight 2.9, ones carry 2.5 -> prediction 0
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [0, 0, 1, 1], [0.8, 0.7, 0.6, 0.7]),
        specialized={"G2": stub_set("G2", [0, 0, 1, 1], [0.7, 0.7, 0.6, 0.6])},
    )
    outcome = vote(pool, np.zeros(2), "G2", config())
    assert outcome.rule_used == "weighted_f1"
    weight_zero = 0.8 + 0.7 + 0.7 + 0.7
    weight_one = 0.6 + 0.7 + 0.6 + 0.6
    assert weight_zero == pytest.approx(2.9)
    assert weight_one == pytest.approx(2.5)
    assert outcome.prediction == 0


def test_vote_tie_with_equal_weights_predicts_lonely():
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [0, 0, 1, 1], [0.5] * 4),
        specialized={"G1": stub_set("G1", [0, 0, 1, 1], [0.5] * 4)},
    )
    assert vote(pool, np.zeros(2), "G1", config()).prediction == 1


def test_vote_dimension_mismatch_error():
    pool = ModelPool(generic=stub_set(GENERIC_SCOPE, [1, 1, 1, 1], [0.5] * 4, dim=3))
    with pytest.raises(ValidationError):
        vote(pool, np.zeros(2), None, config())


def test_vote_tally_size_invariant():
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [1, 0, 1, 0], [0.5] * 4),
        specialized={"G1": stub_set("G1", [1, 1, 1, 1], [0.9] * 4)},
    )
    for assignment in (None, "G1", "G7"):
        outcome = vote(pool, np.zeros(2), assignment, config())
        assert len(outcome.tally) in (4, 8)
        assert (outcome.rule_used == "generic_only") == (len(outcome.tally) == 4)


def test_weighted_rule_never_overrides_strict_majority():
    # 5 ones vs 3 zeros; zeros hold huge weights but majority stands
    pool = ModelPool(
        generic=stub_set(GENERIC_SCOPE, [1, 1, 1, 0], [0.1, 0.1, 0.1, 0.99]),
        specialized={"G1": stub_set("G1", [1, 1, 0, 0], [0.1, 0.1, 0.99, 0.99])},
    )
    outcome = vote(pool, np.zeros(2), "G1", config())
    assert outcome.prediction == 1
    assert outcome.rule_used == "majority"


# ---------------------------------------------------------------- evaluation


def eval_holdout(rows, assignments):
    return list(zip(rows, assignments))


def test_evaluate_week_report_axes():
    rows = two_class_rows(n_per_class=20, seed=6)
    cfg = config()
    members = frozenset(r.point_id for r in rows)
    snapshot = ClusterSnapshot(week=1, cohorts={"G1": members}, noise=frozenset())
    pool, _ = refresh_generic(ModelPool(min_cohort_size=10, min_class_count=3), rows, cfg, seed=0, week=1)
    pool, _ = refresh_specialized(pool, snapshot, rows, cfg, seed=0, week=1)
    holdout = eval_holdout(rows, ["G1"] * len(rows))
    report = evaluate_week(pool, holdout, snapshot, cfg)
    axes = {(r.scope, r.cohort, r.kind) for r in report}
    assert ("generic", "", "gbt") in axes
    assert ("specialized", "G1", "gbt") in axes
    assert ("voting", "", "ensemble") in axes
    assert len([r for r in report if r.scope == "generic"]) == 4


def test_evaluate_week_perfect_pool_alls_ones():
    rows = two_class_rows(n_per_class=6, seed=7)
    labels = [r.label for r in rows]
    pool = ModelPool(generic=stub_set(GENERIC_SCOPE, [1, 1, 1, 1], [0.5] * 4))
    # stub predicts all ones; feed rows where truth is all ones
    ones_rows = [r for r in rows if r.label == 1]
    snapshot = ClusterSnapshot(week=1, cohorts={}, noise=frozenset(r.point_id for r in ones_rows))
    report = evaluate_week(pool, eval_holdout(ones_rows, [None] * len(ones_rows)), snapshot, config())
    for row in report:
        assert row.metrics.accuracy == 1.0
        assert row.metrics.f1 == 1.0


def test_evaluate_week_empty_holdout_error():
    pool = ModelPool(generic=stub_set(GENERIC_SCOPE, [1, 1, 1, 1], [0.5] * 4))
    snapshot = ClusterSnapshot(week=1, cohorts={}, noise=frozenset())
    with pytest.raises(ValidationError):
        evaluate_week(pool, [], snapshot, config())


# ---------------------------------------------------------------- persistence


def test_pool_json_round_trip():
    rows = two_class_rows(n_per_class=15, seed=8)
    cfg = config()
    members = frozenset(r.point_id for r in rows)
    snapshot = ClusterSnapshot(week=1, cohorts={"G1": members}, noise=frozenset())
    pool, _ = refresh_generic(ModelPool(min_cohort_size=10, min_class_count=3), rows, cfg, seed=0, week=1)
    pool, _ = refresh_specialized(pool, snapshot, rows, cfg, seed=0, week=1)
    restored = pool_from_json(pool_to_json(pool))
    assert pool_to_json(restored) == pool_to_json(pool)
    probe = np.random.default_rng(1).normal(size=(10, 2))
    for kind in KIND_ORDER:
        assert np.array_equal(
            restored.generic.models[kind].predict(probe),
            pool.generic.models[kind].predict(probe),
        )
