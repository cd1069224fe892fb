"""Shared domain types: feature records, weekly batches, labels, config.

Everything here is an immutable value object; instances can be shared freely
across threads. Score thresholds, day segmentation and the engine-wide knob
set live here so every other module works against one vocabulary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

SCORE_MIN = 10
SCORE_MAX = 40

MINUTES_PER_DAY = 1440


class ValidationError(ValueError):
    """Raised when an input value violates a documented precondition."""


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration content."""


class DaySegment(Enum):
    NIGHT = "night"
    MORNING = "morning"
    AFTERNOON = "afternoon"
    EVENING = "evening"


# Fixed order used everywhere a vector is built from per-segment blocks.
SEGMENT_ORDER = (
    DaySegment.NIGHT,
    DaySegment.MORNING,
    DaySegment.AFTERNOON,
    DaySegment.EVENING,
)

# Half-open [start, end) minute windows; each minute belongs to exactly one.
_SEGMENT_BOUNDS = (
    (0, 360, DaySegment.NIGHT),
    (360, 720, DaySegment.MORNING),
    (720, 1080, DaySegment.AFTERNOON),
    (1080, 1440, DaySegment.EVENING),
)


def validate_score(score: int) -> int:
    if not isinstance(score, (int,)) or isinstance(score, bool):
        raise ValidationError(f"questionnaire score must be an integer, got {score!r}")
    if score < SCORE_MIN or score > SCORE_MAX:
        raise ValidationError(
            f"questionnaire score {score} outside valid range [{SCORE_MIN}, {SCORE_MAX}]"
        )
    return score


def label_from_score(score: int, threshold: int = 20) -> int:
    """Binarize a questionnaire sum: 1 iff strictly above the threshold."""
    validate_score(score)
    return 1 if score > threshold else 0


def segment_of(minutes_since_midnight: int) -> DaySegment:
    """Map a minute of the day onto its segment (half-open windows)."""
    m = minutes_since_midnight
    if m < 0 or m >= MINUTES_PER_DAY:
        raise ValidationError(
            f"time of day {m} outside [0, {MINUTES_PER_DAY}) minutes"
        )
    for start, end, seg in _SEGMENT_BOUNDS:
        if start <= m < end:
            return seg
    raise AssertionError("unreachable: segment windows partition the day")


@dataclass(frozen=True)
class FeatureRecord:
    """One participant-segment-day row of named behavioral features.

    ``continuous`` maps feature name to a float (None marks a missing value
    awaiting imputation); ``categorical`` maps feature name to a token
    (None likewise missing).
    """

    participant_id: str
    week: int
    day: str  # ISO date
    segment: DaySegment
    continuous: dict[str, float | None]
    categorical: dict[str, str | None] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= self.week <= 10:
            raise ValidationError(f"week {self.week} outside [1, 10]")


@dataclass(frozen=True)
class WeeklyBatch:
    """All records plus known ground-truth scores for one study week."""

    week: int
    records: tuple[FeatureRecord, ...]
    labels: dict[str, int]  # participant_id -> questionnaire score

    def __post_init__(self) -> None:
        for rec in self.records:
            if rec.week != self.week:
                raise ValidationError(
                    f"record for {rec.participant_id} has week {rec.week}, "
                    f"batch is week {self.week}"
                )
        present = {rec.participant_id for rec in self.records}
        for pid in self.labels:
            if pid not in present:
                raise ValidationError(
                    f"labeled participant {pid} has no records in week {self.week}"
                )

    def participants(self) -> list[str]:
        return sorted({rec.participant_id for rec in self.records})


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters for the four classifier kinds (invented defaults)."""

    logreg_iterations: int = 500
    logreg_step: float = 0.1
    logreg_l2: float = 1e-3
    svm_epochs: int = 500
    svm_l2: float = 1e-3
    forest_trees: int = 100
    forest_depth: int = 8
    gbt_rounds: int = 100
    gbt_depth: int = 3
    gbt_learning_rate: float = 0.1


@dataclass(frozen=True)
class EngineConfig:
    """Knobs for the weekly replay pipeline.

    ``eps`` and ``density_fraction`` drive the incremental clustering,
    ``score_threshold`` the label binarization, ``cv_folds`` and
    ``smote_neighbors`` the validation loop.
    """

    eps: float = 0.5
    density_fraction: float = 0.1
    min_pts_floor: int = 5
    cv_folds: int = 10
    smote_neighbors: int = 5
    score_threshold: int = 20
    pca_variance_target: float = 0.90
    rng_seed: int = 42
    refit_every_n_weeks: int = 0  # 0 = fit preprocessing once at week 1
    holdout_fraction: float = 0.2
    min_cohort_size: int = 15
    min_class_count: int = 5
    learners: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not 0 < self.density_fraction < 1:
            raise ConfigError(
                f"density_fraction must lie in (0, 1), got {self.density_fraction}"
            )
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.smote_neighbors < 1:
            raise ConfigError(
                f"smote_neighbors must be >= 1, got {self.smote_neighbors}"
            )


def _config_from_mapping(data: dict) -> EngineConfig:
    known = {f.name for f in fields(EngineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(data)
    if "learners" in kwargs:
        sub = kwargs["learners"]
        if not isinstance(sub, dict):
            raise ConfigError("learners section must be an object")
        sub_known = {f.name for f in fields(LearnerConfig)}
        sub_unknown = sorted(set(sub) - sub_known)
        if sub_unknown:
            raise ConfigError(f"unknown learner config keys: {', '.join(sub_unknown)}")
        kwargs["learners"] = LearnerConfig(**sub)
    return EngineConfig(**kwargs)


def load_config(path: str | Path) -> EngineConfig:
    """Load an EngineConfig from a UTF-8 JSON file; unknown keys are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return _config_from_mapping(data)
