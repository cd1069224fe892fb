"""Tests for outlier removal, imputation, encoding, scaling, PCA, vectorize."""

import numpy as np
import pytest

from cohortsense.core import DaySegment, FeatureRecord, ValidationError, WeeklyBatch
from cohortsense.preprocess import (
    encode_onehot,
    fit_pipeline,
    impute,
    pca_fit,
    pca_project,
    pca_project_matrix,
    pca_reconstruct,
    pipeline_from_json,
    pipeline_to_json,
    remove_outliers,
    scaler_apply,
    scaler_fit,
    vectorize_week,
)


def rec(pid, value_map, segment=DaySegment.MORNING, week=1, day="2019-04-01", cat=None):
    return FeatureRecord(
        participant_id=pid,
        week=week,
        day=day,
        segment=segment,
        continuous=dict(value_map),
        categorical=dict(cat or {}),
    )


# ---------------------------------------------------------------- outliers


def test_outlier_fence_drops_extreme_record():
    records = [rec(f"p{i}", {"x": v}) for i, v in enumerate([1.0, 2.0, 3.0, 4.0, 100.0])]
    kept = remove_outliers(records)
    # Q1=2, Q3=4, fence = (-1, 7): only the 100 falls outside
    assert [r.continuous["x"] for r in kept] == [1.0, 2.0, 3.0, 4.0]


def test_outlier_identical_values_nothing_dropped():
    records = [rec(f"p{i}", {"x": 5.0}) for i in range(6)]
    assert len(remove_outliers(records)) == 6


def test_outlier_empty_batch():
    assert remove_outliers([]) == []


def test_outlier_preserves_order_and_ignores_missing():
    records = [
        rec("p0", {"x": 1.0, "y": None}),
        rec("p1", {"x": 2.0, "y": 1.0}),
        rec("p2", {"x": 3.0, "y": 1.0}),
        rec("p3", {"x": 4.0, "y": 1.0}),
        rec("p4", {"x": 2.5, "y": 1.0}),
    ]
    kept = remove_outliers(records)
    assert [r.participant_id for r in kept] == ["p0", "p1", "p2", "p3", "p4"]


def test_outlier_all_missing_feature_errors():
    records = [rec(f"p{i}", {"x": None}) for i in range(5)]
    with pytest.raises(ValidationError, match="'x'"):
        remove_outliers(records)


# ---------------------------------------------------------------- imputation


def test_impute_median_within_participant_segment():
    records = [
        rec("p0", {"x": 2.0}),
        rec("p0", {"x": None}),
        rec("p0", {"x": 4.0}),
    ]
    filled = impute(records)
    assert filled[1].continuous["x"] == pytest.approx(3.0)
    # observed values untouched
    assert filled[0].continuous["x"] == 2.0
    assert filled[2].continuous["x"] == 4.0


def test_impute_mode_and_tie_break():
    records = [
        rec("p0", {}, cat={"c": "A"}),
        rec("p0", {}, cat={"c": "A"}),
        rec("p0", {}, cat={"c": None}),
        rec("p0", {}, cat={"c": "B"}),
    ]
    assert impute(records)[2].categorical["c"] == "A"

    tied = [
        rec("p0", {}, cat={"c": "B"}),
        rec("p0", {}, cat={"c": "A"}),
        rec("p0", {}, cat={"c": None}),
    ]
    # tie between A and B resolves to the lexicographically smallest
    assert impute(tied)[2].categorical["c"] == "A"


def test_impute_falls_back_to_batch_level():
    records = [
        rec("p0", {"x": None}, segment=DaySegment.NIGHT),
        rec("p1", {"x": 10.0}, segment=DaySegment.MORNING),
        rec("p1", {"x": 20.0}, segment=DaySegment.MORNING),
    ]
    filled = impute(records)
    assert filled[0].continuous["x"] == pytest.approx(15.0)


def test_impute_feature_missing_everywhere_errors():
    records = [rec("p0", {"x": None}), rec("p1", {"x": None})]
    with pytest.raises(ValidationError, match="'x'"):
        impute(records)


# ---------------------------------------------------------------- one-hot


def test_onehot_known_unseen_and_width():
    vocab = ("A", "B", "C")
    assert np.array_equal(encode_onehot("B", vocab), [0.0, 1.0, 0.0])
    assert np.array_equal(encode_onehot("D", vocab), [0.0, 0.0, 0.0])
    assert len(encode_onehot("A", ("A", "B"))) + len(encode_onehot("A", vocab)) == 5


# ---------------------------------------------------------------- scaler


def test_scaler_maps_to_unit_interval():
    scaler = scaler_fit(np.array([[2.0], [4.0], [6.0]]))
    out = scaler_apply(scaler, np.array([[2.0], [4.0], [6.0]]))
    assert out.ravel() == pytest.approx([0.0, 0.5, 1.0])


def test_scaler_clamps_out_of_range():
    scaler = scaler_fit(np.array([[2.0], [6.0]]))
    assert scaler_apply(scaler, np.array([[8.0]]))[0, 0] == 1.0
    assert scaler_apply(scaler, np.array([[0.0]]))[0, 0] == 0.0


def test_scaler_constant_feature_maps_to_zero():
    scaler = scaler_fit(np.array([[5.0], [5.0]]))
    assert scaler_apply(scaler, np.array([[5.0], [7.0]])).ravel().tolist() == [0.0, 0.0]


def test_scaler_output_always_in_unit_interval():
    rng = np.random.default_rng(0)
    fit = rng.normal(size=(50, 4))
    apply = rng.normal(scale=10.0, size=(80, 4))
    out = scaler_apply(scaler_fit(fit), apply)
    assert out.min() >= 0.0 and out.max() <= 1.0


# ---------------------------------------------------------------- PCA


def test_pca_collinear_points_single_component():
    t = np.linspace(0, 1, 30)
    matrix = np.column_stack([t, t])
    proj = pca_fit(matrix, variance_target=0.9)
    assert proj.components.shape[0] == 1
    assert proj.explained_variance_ratio[0] >= 0.999


def test_pca_isotropic_ratios_match_eigen_oracle():
    rng = np.random.default_rng(33)
    matrix = rng.normal(size=(4000, 2))
    proj = pca_fit(matrix, variance_target=1.0)
    assert proj.explained_variance_ratio[0] == pytest.approx(0.5, abs=0.1)
    assert proj.explained_variance_ratio[1] == pytest.approx(0.5, abs=0.1)
    # independent oracle: singular values of the centered data matrix
    centered = matrix - matrix.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    oracle = svals**2 / (svals**2).sum()
    assert np.allclose(np.sort(proj.explained_variance_ratio), np.sort(oracle), atol=1e-9)


def test_pca_projecting_mean_gives_zero():
    rng = np.random.default_rng(34)
    matrix = rng.normal(size=(40, 5))
    proj = pca_fit(matrix, variance_target=0.9)
    assert np.allclose(pca_project(proj, matrix.mean(axis=0)), 0.0, atol=1e-12)


def test_pca_reconstruction_with_all_components():
    rng = np.random.default_rng(35)
    matrix = rng.normal(size=(60, 4))
    proj = pca_fit(matrix, variance_target=1.0)
    coords = pca_project_matrix(proj, matrix)
    recon = np.array([pca_reconstruct(proj, c) for c in coords])
    assert np.max(np.abs(recon - matrix)) < 1e-6


def test_pca_minimum_two_components_when_available():
    rng = np.random.default_rng(36)
    base = rng.normal(size=(100, 1))
    # second direction has tiny variance: target reached by one component
    matrix = np.hstack([base * 10.0, rng.normal(scale=0.01, size=(100, 1))])
    proj = pca_fit(matrix, variance_target=0.5)
    assert proj.components.shape[0] == 2


def test_pca_component_rows_orthonormal():
    rng = np.random.default_rng(37)
    matrix = rng.normal(size=(80, 6))
    proj = pca_fit(matrix, variance_target=1.0)
    gram = proj.components @ proj.components.T
    assert np.allclose(gram, np.eye(len(gram)), atol=1e-8)
    assert proj.explained_variance_ratio.sum() <= 1.0 + 1e-8


def test_pca_rank_zero_errors():
    with pytest.raises(ValidationError):
        pca_fit(np.ones((5, 3)), variance_target=0.9)


# ---------------------------------------------------------------- vectorize


DAYS = [f"2019-04-{d:02d}" for d in range(1, 8)]


def week_records(pid, segment_profile, cat_token=None, week=1, noise=None):
    """28 records (7 days x 4 segments) from a per-segment value profile."""
    records = []
    for day in DAYS:
        for seg in DaySegment:
            values = dict(segment_profile[seg])
            if noise is not None:
                values = {k: v + noise.normal(0, 0.01) for k, v in values.items()}
            cat = {"ctx": cat_token} if cat_token is not None else {}
            records.append(rec(pid, values, segment=seg, week=week, day=day, cat=cat))
    return records


def constant_profile(x, y):
    return {seg: {"x": x, "y": y} for seg in DaySegment}


def test_vectorize_identical_records_equals_single_profile_projection():
    profiles = {
        "p0": constant_profile(0.2, 0.9),
        "p1": constant_profile(0.8, 0.1),
        "p2": constant_profile(0.5, 0.5),
    }
    records = [r for pid, prof in profiles.items() for r in week_records(pid, prof)]
    batch = WeeklyBatch(week=1, records=tuple(records), labels={})
    pipeline = fit_pipeline(records, variance_target=0.95)
    vectors, omitted = vectorize_week(batch, pipeline)
    assert omitted == []
    assert [v.participant_id for v in vectors] == ["p0", "p1", "p2"]

    # p0's vector equals the projection of its constant segment profile
    width = pipeline.block_width()
    raw = np.tile([0.2, 0.9], 4)
    assert width * 4 == len(raw)
    scaled = scaler_apply(pipeline.scaler, raw[None, :])
    expected = pca_project(pipeline.projector, scaled[0])
    assert np.allclose(vectors[0].values, expected, atol=1e-10)


def test_vectorize_identical_participants_identical_vectors():
    prof = constant_profile(0.4, 0.6)
    records = week_records("p0", prof) + week_records("p1", prof) + week_records(
        "p2", constant_profile(0.9, 0.1)
    )
    batch = WeeklyBatch(week=1, records=tuple(records), labels={})
    pipeline = fit_pipeline(records, variance_target=0.95)
    vectors, _ = vectorize_week(batch, pipeline)
    assert np.allclose(vectors[0].values, vectors[1].values)


def test_vectorize_affine_feature_rescale_absorbed():
    def batch_for(scale, shift):
        profiles = {
            "p0": {seg: {"x": 0.2 * scale + shift, "y": 0.9} for seg in DaySegment},
            "p1": {seg: {"x": 0.8 * scale + shift, "y": 0.1} for seg in DaySegment},
            "p2": {seg: {"x": 0.5 * scale + shift, "y": 0.5} for seg in DaySegment},
        }
        records = [r for pid, prof in profiles.items() for r in week_records(pid, prof)]
        return records, WeeklyBatch(week=1, records=tuple(records), labels={})

    rec_a, batch_a = batch_for(1.0, 0.0)
    rec_b, batch_b = batch_for(2.0, 3.0)
    vec_a, _ = vectorize_week(batch_a, fit_pipeline(rec_a, 0.95))
    vec_b, _ = vectorize_week(batch_b, fit_pipeline(rec_b, 0.95))
    for a, b in zip(vec_a, vec_b):
        assert np.allclose(a.values, b.values, atol=1e-10)


def test_vectorize_unseen_category_encodes_zeros():
    records = (
        week_records("p0", constant_profile(0.1, 0.2), cat_token="alpha")
        + week_records("p1", constant_profile(0.9, 0.8), cat_token="beta")
    )
    pipeline = fit_pipeline(records, variance_target=0.95)
    assert pipeline.vocabularies["ctx"] == ("alpha", "beta")
    later = week_records("p9", constant_profile(0.5, 0.5), cat_token="gamma", week=2)
    batch = WeeklyBatch(week=2, records=tuple(later), labels={})
    vectors, omitted = vectorize_week(batch, pipeline)
    assert omitted == [] and len(vectors) == 1


def test_pipeline_json_round_trip():
    records = (
        week_records("p0", constant_profile(0.1, 0.2), cat_token="alpha")
        + week_records("p1", constant_profile(0.9, 0.8), cat_token="beta")
        + week_records("p2", constant_profile(0.4, 0.3), cat_token="alpha")
    )
    pipeline = fit_pipeline(records, variance_target=0.9)
    restored = pipeline_from_json(pipeline_to_json(pipeline))
    batch = WeeklyBatch(week=1, records=tuple(records), labels={})
    v1, _ = vectorize_week(batch, pipeline)
    v2, _ = vectorize_week(batch, restored)
    for a, b in zip(v1, v2):
        assert np.array_equal(a.values, b.values)


def test_pipeline_schema_version_gate():
    records = week_records("p0", constant_profile(0.1, 0.2)) + week_records(
        "p1", constant_profile(0.9, 0.8)
    )
    doc = pipeline_to_json(fit_pipeline(records, 0.9))
    doc["schema_version"] = 99
    with pytest.raises(ValidationError):
        pipeline_from_json(doc)
