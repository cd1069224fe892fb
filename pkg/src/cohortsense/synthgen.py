"""Deterministic 10-week synthetic cohort generator.

Group structure, sizes, and label distributions mirror the reported
behavioral-group dynamics: three stable cohorts, a fourth emerging in week
five, reabsorbed in week eight, re-emerging for weeks nine and ten.

Ordinal behavioral descriptors map to a normalized per-feature scale
(high/frequent 1.0, moderate/average/regular 0.6, low/fewer/short 0.3,
variable 0.6 with doubled spread). Within a group, later-interval profile
changes are compressed toward the group's first-interval anchor so each
cohort stays one density-connected region across the whole stream while
distinct groups keep full-scale separation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .core import (
    SEGMENT_ORDER,
    ConfigError,
    DaySegment,
    FeatureRecord,
    ValidationError,
    WeeklyBatch,
)

FEATURES = (
    "physical_activity",
    "call_count",
    "sms_count",
    "bluetooth_unique",
    "location_changes",
    "phone_usage_min",
    "sleep_duration",
)

CATEGORICAL_FEATURE = "social_context"

GROUP_TOKENS = {
    "G1": "high_social",
    "G2": "balanced",
    "G3": "withdrawn",
    "G4": "variable_rhythm",
}

ORDINAL_SCALE = {
    "high": 1.0,
    "frequent": 1.0,
    "moderate": 0.6,
    "average": 0.6,
    "regular": 0.6,
    "variable": 0.6,
    "low": 0.3,
    "fewer": 0.3,
    "short": 0.3,
}

BASE_SPREAD = 0.08  # per-participant trait offset, normalized scale
DAY_NOISE = 0.05  # per-record observation noise
VARIABLE_SPREAD_FACTOR = 2.0
DRIFT_COMPRESSION = 0.25  # cross-interval mean drift kept inside eps reach
MISSING_CELL_RATE = 0.05
OUTLIER_RECORD_RATE = 0.01
OUTLIER_FACTOR = 10.0
LONELY_SHIFT = 0.42
SCORE_THRESHOLD = 20

STUDY_START = date(2019, 4, 1)

# Behavioral descriptors per (group, week interval); None inherits the
# group's previous interval. "reduced"/"increased" move one ordinal step
# relative to the previous interval.
_DESCRIPTORS: dict[str, list[tuple[tuple[int, int], dict[str, str | None], tuple[int, int]]]] = {
    "G1": [
        ((1, 4), dict(physical_activity="high", call_count="frequent",
                      sms_count="frequent", bluetooth_unique="high",
                      location_changes="regular", phone_usage_min="moderate",
                      sleep_duration="average"), (10, 18)),
        ((5, 7), dict(physical_activity="high", call_count="frequent",
                      sms_count="frequent", bluetooth_unique="high",
                      location_changes="regular", phone_usage_min="moderate",
                      sleep_duration="average"), (10, 22)),
        ((8, 8), dict(physical_activity="high", call_count="frequent",
                      sms_count="frequent", bluetooth_unique="high",
                      location_changes="regular", phone_usage_min="moderate",
                      sleep_duration="average"), (10, 20)),
        ((9, 10), dict(physical_activity="high", call_count="frequent",
                       sms_count="frequent", bluetooth_unique="high",
                       location_changes="regular", phone_usage_min="moderate",
                       sleep_duration="average"), (10, 20)),
    ],
    "G2": [
        ((1, 4), dict(physical_activity="high", call_count="average",
                      sms_count="average", bluetooth_unique="average",
                      location_changes=None, phone_usage_min="moderate",
                      sleep_duration="average"), (15, 26)),
        ((5, 7), dict(physical_activity="reduced", call_count="fewer",
                      sms_count="fewer", bluetooth_unique="average",
                      location_changes="moderate", phone_usage_min="increased",
                      sleep_duration="reduced"), (15, 32)),
        ((8, 8), dict(physical_activity="high", call_count="average",
                      sms_count="average", bluetooth_unique="average",
                      location_changes=None, phone_usage_min="regular",
                      sleep_duration="average"), (15, 25)),
        ((9, 10), dict(physical_activity="high", call_count="average",
                       sms_count="average", bluetooth_unique="average",
                       location_changes=None, phone_usage_min="regular",
                       sleep_duration="average"), (16, 32)),
    ],
    "G3": [
        ((1, 4), dict(physical_activity="low", call_count="fewer",
                      sms_count="fewer", bluetooth_unique="fewer",
                      location_changes="moderate", phone_usage_min="high",
                      sleep_duration="short"), (16, 30)),
        ((5, 7), dict(physical_activity="low", call_count="fewer",
                      sms_count=None, bluetooth_unique="average",
                      location_changes="fewer", phone_usage_min="high",
                      sleep_duration="short"), (18, 36)),
        ((8, 8), dict(physical_activity="low", call_count="variable",
                      sms_count="variable", bluetooth_unique="fewer",
                      location_changes="moderate", phone_usage_min="high",
                      sleep_duration="short"), (18, 36)),
        ((9, 10), dict(physical_activity="low", call_count="variable",
                       sms_count="variable", bluetooth_unique="fewer",
                       location_changes="moderate", phone_usage_min="high",
                       sleep_duration="short"), (18, 36)),
    ],
    "G4": [
        ((5, 7), dict(physical_activity="moderate", call_count="variable",
                      sms_count="variable", bluetooth_unique="high",
                      location_changes="regular", phone_usage_min="moderate",
                      sleep_duration="variable"), (14, 28)),
        ((9, 10), dict(physical_activity="low", call_count="variable",
                       sms_count="variable", bluetooth_unique="variable",
                       location_changes="moderate", phone_usage_min="moderate",
                       sleep_duration="average"), (14, 35)),
    ],
}

# Diurnal shapes; one multiplicative weight per segment in SEGMENT_ORDER
# (night, morning, afternoon, evening). Amplitudes stay within ~20% so the
# pooled per-feature interquartile fences keep every segment's honest
# records inside; only the injected x10 outliers fall out.
_RHYTHMS = {
    "day": (0.85, 1.10, 1.12, 0.95),
    "evening": (0.88, 0.95, 1.05, 1.15),
    "night": (1.12, 0.88, 0.92, 1.05),
    "flat": (1.0, 1.0, 1.0, 1.0),
}

_GROUP_RHYTHM = {
    "G1": dict(physical_activity="day", call_count="evening", sms_count="evening",
               bluetooth_unique="day", location_changes="day",
               phone_usage_min="evening", sleep_duration="night"),
    "G2": dict(physical_activity="day", call_count="flat", sms_count="evening",
               bluetooth_unique="day", location_changes="flat",
               phone_usage_min="evening", sleep_duration="night"),
    "G3": dict(physical_activity="flat", call_count="flat", sms_count="flat",
               bluetooth_unique="evening", location_changes="flat",
               phone_usage_min="night", sleep_duration="night"),
    "G4": dict(physical_activity="evening", call_count="night", sms_count="night",
               bluetooth_unique="evening", location_changes="evening",
               phone_usage_min="night", sleep_duration="flat"),
}

# Within-group loneliness signature: lonely members' trait offsets shift
# along a group-specific direction. Each direction runs along a
# between-group axis (so the variance-dominant projection keeps it) and
# the signs conflict across groups: no single pooled axis separates lonely
# from not-lonely, but within one cohort the split is clean.
_LONELY_DIRECTION = {
    "G1": {},
    # G2's lonely members drift toward the withdrawn pole (G3-like behavior)
    "G2": {"physical_activity": -0.70, "call_count": -0.30, "sms_count": -0.30,
           "bluetooth_unique": -0.30, "phone_usage_min": 0.40, "sleep_duration": -0.30},
    # G3's lonely members drift the opposite way along the same axis
    "G3": {"physical_activity": 0.70, "call_count": 0.30, "sms_count": 0.30,
           "bluetooth_unique": 0.30, "phone_usage_min": -0.40, "sleep_duration": 0.30},
    # G4's lonely members drift along the social-intensity axis toward G1
    "G4": {"physical_activity": 0.58, "call_count": 0.58, "sms_count": 0.58},
}

# Weekly target sizes (G1, G2, G3, G4); week 1 anchors at 84/70/51.
_WEEKLY_SIZES = {
    1: (84, 70, 51, 0),
    2: (83, 71, 51, 0),
    3: (84, 69, 52, 0),
    4: (82, 71, 52, 0),
    5: (40, 20, 30, 115),
    6: (38, 20, 27, 120),
    7: (35, 18, 27, 125),
    8: (84, 70, 51, 0),
    9: (86, 48, 43, 28),
    10: (88, 50, 37, 30),
}

GROUPS = ("G1", "G2", "G3", "G4")


@dataclass(frozen=True)
class GroupProfile:
    group_id: str
    week_interval: tuple[int, int]
    feature_means: dict[str, float]
    feature_spreads: dict[str, float]
    score_range: tuple[int, int]
    segment_weights: dict[str, tuple[float, float, float, float]]
    # feature-space displacement direction of lonely members; None falls
    # back to the built-in per-group map
    lonely_direction: dict[str, float] | None = None
    # categorical context token; None falls back to the built-in map
    social_token: str | None = None

    def __post_init__(self) -> None:
        lo, hi = self.score_range
        if lo < 10 or hi > 40:
            raise ValidationError(f"score range {self.score_range} outside [10, 40]")
        if any(s <= 0 for s in self.feature_spreads.values()):
            raise ValidationError("feature spreads must be positive")

    def covers(self, week: int) -> bool:
        return self.week_interval[0] <= week <= self.week_interval[1]


@dataclass(frozen=True)
class CohortPlan:
    total_participants: int
    lonely_count: int
    weekly_group_membership: dict[int, dict[str, frozenset[str]]]

    def __post_init__(self) -> None:
        for week, groups in self.weekly_group_membership.items():
            seen: set[str] = set()
            for group, members in groups.items():
                overlap = seen & set(members)
                if overlap:
                    raise ValidationError(
                        f"week {week}: participants {sorted(overlap)[:3]} in "
                        f"multiple groups"
                    )
                seen |= set(members)

    def weeks(self) -> list[int]:
        return sorted(self.weekly_group_membership)

    def group_of(self, week: int, pid: str) -> str:
        for group, members in self.weekly_group_membership[week].items():
            if pid in members:
                return group
        raise ValidationError(f"participant {pid} has no group in week {week}")


def _ordinal_step(value: float, direction: int) -> float:
    scale = sorted({0.3, 0.6, 1.0})
    idx = min(range(len(scale)), key=lambda i: abs(scale[i] - value))
    return scale[max(0, min(len(scale) - 1, idx + direction))]


def build_default_profiles() -> list[GroupProfile]:
    """One profile per (group, week-interval) behavioral-pattern cell.

    Cross-interval mean changes are compressed by DRIFT_COMPRESSION toward
    each group's first-interval anchor; score ranges are kept verbatim.
    """
    profiles = []
    for group, cells in _DESCRIPTORS.items():
        nominal_prev: dict[str, float] = {}
        anchor: dict[str, float] = {}
        for interval, descriptors, score_range in cells:
            nominal: dict[str, float] = {}
            spreads: dict[str, float] = {}
            for feat in FEATURES:
                word = descriptors.get(feat)
                if word is None:
                    nominal[feat] = nominal_prev.get(feat, 0.6)
                    spreads[feat] = BASE_SPREAD
                elif word == "reduced":
                    nominal[feat] = _ordinal_step(nominal_prev[feat], -1)
                    spreads[feat] = BASE_SPREAD
                elif word == "increased":
                    nominal[feat] = _ordinal_step(nominal_prev[feat], +1)
                    spreads[feat] = BASE_SPREAD
                else:
                    nominal[feat] = ORDINAL_SCALE[word]
                    spreads[feat] = BASE_SPREAD * (
                        VARIABLE_SPREAD_FACTOR if word == "variable" else 1.0
                    )
            if not anchor:
                anchor = dict(nominal)
                means = dict(nominal)
            else:
                means = {
                    f: anchor[f] + DRIFT_COMPRESSION * (nominal[f] - anchor[f])
                    for f in FEATURES
                }
            nominal_prev = nominal
            profiles.append(
                GroupProfile(
                    group_id=group,
                    week_interval=interval,
                    feature_means=means,
                    feature_spreads=spreads,
                    score_range=score_range,
                    segment_weights={
                        f: _RHYTHMS[_GROUP_RHYTHM[group][f]] for f in FEATURES
                    },
                )
            )
    return profiles


def build_default_plan() -> CohortPlan:
    """Deterministic membership evolution matching the weekly size targets.

    Groups shed their highest-numbered members when shrinking; freed
    participants fill under-target groups in group order.
    """
    pids = [f"P{i:03d}" for i in range(1, 206)]
    rosters: dict[str, list[str]] = {
        "G1": pids[:84],
        "G2": pids[84:154],
        "G3": pids[154:205],
        "G4": [],
    }
    membership: dict[int, dict[str, frozenset[str]]] = {}
    for week in range(1, 11):
        targets = dict(zip(GROUPS, _WEEKLY_SIZES[week]))
        pool: list[str] = []
        for group in GROUPS:
            excess = len(rosters[group]) - targets[group]
            if excess > 0:
                rosters[group].sort()
                movers = rosters[group][-excess:]
                rosters[group] = rosters[group][:-excess]
                pool.extend(movers)
        pool.sort()
        for group in GROUPS:
            deficit = targets[group] - len(rosters[group])
            if deficit > 0:
                rosters[group].extend(pool[:deficit])
                pool = pool[deficit:]
        if pool:
            raise AssertionError(f"week {week}: unplaced participants {pool}")
        membership[week] = {
            g: frozenset(rosters[g]) for g in GROUPS if rosters[g]
        }
    return CohortPlan(
        total_participants=205, lonely_count=87, weekly_group_membership=membership
    )


def _profile_for(profiles: list[GroupProfile], group: str, week: int) -> GroupProfile:
    for prof in profiles:
        if prof.group_id == group and prof.covers(week):
            return prof
    raise ConfigError(f"no profile covers group {group} in week {week}")


def _sub_rng(seed: int, *parts: object) -> np.random.Generator:
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, int):
            entropy.append(part & 0xFFFFFFFF)
        else:
            entropy.extend(str(part).encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _assign_scores(
    plan: CohortPlan, profiles: list[GroupProfile], seed: int
) -> dict[str, int]:
    """Questionnaire scores within each participant's final-week group range.

    Lonely membership is apportioned per group (largest remainder over the
    above-threshold share of each score range) so the planned lonely count
    is hit exactly; scores then draw uniformly from the matching slice.
    """
    final_week = max(plan.weeks())
    rosters = plan.weekly_group_membership[final_week]
    shares: dict[str, float] = {}
    ranges: dict[str, tuple[int, int]] = {}
    for group, members in rosters.items():
        lo, hi = _profile_for(profiles, group, final_week).score_range
        ranges[group] = (lo, hi)
        above = max(0, hi - SCORE_THRESHOLD)
        shares[group] = len(members) * above / (hi - lo + 1)

    capacity = {
        g: (len(rosters[g]) if ranges[g][1] > SCORE_THRESHOLD else 0) for g in rosters
    }
    if plan.lonely_count > sum(capacity.values()):
        raise ConfigError(
            f"plan wants {plan.lonely_count} lonely participants but score "
            f"ranges only allow {sum(capacity.values())}"
        )
    total_share = sum(shares.values())
    ideal = {
        g: plan.lonely_count * shares[g] / total_share if total_share else 0.0
        for g in rosters
    }
    counts = {g: min(int(math.floor(ideal[g])), capacity[g]) for g in rosters}
    remaining = plan.lonely_count - sum(counts.values())
    by_remainder = sorted(
        rosters, key=lambda g: (-(ideal[g] - math.floor(ideal[g])), g)
    )
    while remaining > 0:
        progressed = False
        for g in by_remainder:
            if remaining == 0:
                break
            if counts[g] < capacity[g]:
                counts[g] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ConfigError("cannot apportion lonely count within capacities")

    scores: dict[str, int] = {}
    for group in sorted(rosters):
        members = sorted(rosters[group])
        lo, hi = ranges[group]
        rng = _sub_rng(seed, "labels", group)
        lonely_ids = set(
            rng.choice(members, size=counts[group], replace=False).tolist()
        ) if counts[group] else set()
        for pid in members:
            if pid in lonely_ids:
                scores[pid] = int(rng.integers(SCORE_THRESHOLD + 1, hi + 1))
            else:
                scores[pid] = int(rng.integers(lo, min(SCORE_THRESHOLD, hi) + 1))
    return scores


def _participant_traits(
    plan: CohortPlan,
    profiles: list[GroupProfile],
    seed: int,
) -> dict[str, dict[str, float]]:
    final_week = max(plan.weeks())
    traits: dict[str, dict[str, float]] = {}
    for group, members in plan.weekly_group_membership[final_week].items():
        prof = _profile_for(profiles, group, final_week)
        for pid in sorted(members):
            rng = _sub_rng(seed, "traits", pid)
            traits[pid] = {
                f: float(rng.normal(0.0, prof.feature_spreads[f])) for f in FEATURES
            }
    return traits


def _lonely_displacement(profile: GroupProfile) -> dict[str, float]:
    direction = profile.lonely_direction
    if direction is None:
        direction = _LONELY_DIRECTION.get(profile.group_id, {})
    return {f: LONELY_SHIFT * d for f, d in direction.items()}


def _sample_participant_week(
    pid: str,
    week: int,
    profile: GroupProfile,
    offsets: dict[str, float],
    rng: np.random.Generator,
    corrupt: bool = True,
    displacement: dict[str, float] | None = None,
) -> list[FeatureRecord]:
    """One record per (day x segment); optionally with missingness/outliers."""
    records = []
    token = profile.social_token
    if token is None:
        token = GROUP_TOKENS.get(profile.group_id, profile.group_id)
    displacement = displacement or {}
    for day_idx in range(7):
        day = (STUDY_START + timedelta(days=(week - 1) * 7 + day_idx)).isoformat()
        for s, segment in enumerate(SEGMENT_ORDER):
            values: dict[str, float | None] = {}
            for f in FEATURES:
                mean = profile.feature_means[f] * profile.segment_weights[f][s]
                mean += displacement.get(f, 0.0)
                values[f] = max(
                    0.0, mean + offsets[f] + float(rng.normal(0.0, DAY_NOISE))
                )
            cat: dict[str, str | None] = {CATEGORICAL_FEATURE: token}
            if corrupt:
                if rng.random() < OUTLIER_RECORD_RATE:
                    values = {f: v * OUTLIER_FACTOR for f, v in values.items()}
                for f in FEATURES:
                    if rng.random() < MISSING_CELL_RATE:
                        values[f] = None
                if rng.random() < MISSING_CELL_RATE:
                    cat[CATEGORICAL_FEATURE] = None
            records.append(
                FeatureRecord(
                    participant_id=pid,
                    week=week,
                    day=day,
                    segment=segment,
                    continuous=values,
                    categorical=cat,
                )
            )
    return records


def generate_cohort(
    plan: CohortPlan, profiles: list[GroupProfile], seed: int
) -> list[WeeklyBatch]:
    """Emit one WeeklyBatch per planned week; bit-identical per seed."""
    for week in plan.weeks():
        for group in plan.weekly_group_membership[week]:
            _profile_for(profiles, group, week)

    scores = _assign_scores(plan, profiles, seed)
    traits = _participant_traits(plan, profiles, seed)

    batches = []
    for week in plan.weeks():
        records: list[FeatureRecord] = []
        groups = plan.weekly_group_membership[week]
        for group in sorted(groups):
            profile = _profile_for(profiles, group, week)
            displacement = _lonely_displacement(profile)
            for pid in sorted(groups[group]):
                rng = _sub_rng(seed, "records", week, pid)
                records.extend(
                    _sample_participant_week(
                        pid,
                        week,
                        profile,
                        traits[pid],
                        rng,
                        displacement=displacement
                        if scores[pid] > SCORE_THRESHOLD
                        else None,
                    )
                )
        records.sort(key=lambda r: (r.participant_id, r.day, r.segment.value))
        labels = {
            pid: scores[pid] for members in groups.values() for pid in members
        }
        batches.append(WeeklyBatch(week=week, records=tuple(records), labels=labels))
    return batches


def inject_drift(
    batch: WeeklyBatch,
    moves: list[tuple[str, str]],
    profiles: list[GroupProfile] | None = None,
) -> WeeklyBatch:
    """Re-sample the given participants' records from a target group profile.

    All other records pass through unchanged; resampling is deterministic
    per (participant, week, target group).
    """
    if not moves:
        return batch
    profiles = profiles if profiles is not None else build_default_profiles()
    present = {rec.participant_id for rec in batch.records}
    replacements: dict[str, list[FeatureRecord]] = {}
    for pid, target in moves:
        if pid not in present:
            raise ValidationError(f"unknown participant {pid!r} in drift moves")
        profile = _profile_for(profiles, target, batch.week)
        rng = _sub_rng(0, "drift", batch.week, pid, target)
        offsets = {
            f: float(rng.normal(0.0, profile.feature_spreads[f])) for f in FEATURES
        }
        replacements[pid] = _sample_participant_week(
            pid, batch.week, profile, offsets, rng, corrupt=False
        )

    consumed = {pid: 0 for pid in replacements}
    records = []
    for rec in batch.records:
        if rec.participant_id in replacements:
            i = consumed[rec.participant_id]
            fresh = replacements[rec.participant_id]
            records.append(fresh[i % len(fresh)])
            consumed[rec.participant_id] += 1
        else:
            records.append(rec)
    return WeeklyBatch(week=batch.week, records=tuple(records), labels=dict(batch.labels))


# ---------------------------------------------------------------- file I/O

_CSV_COLUMNS = ("participant_id", "week", "day", "segment") + tuple(sorted(FEATURES)) + (
    CATEGORICAL_FEATURE,
)


def write_cohort(out_dir: str | Path, batches: list[WeeklyBatch], plan: CohortPlan) -> None:
    """Write week_<n>.csv files, labels.csv, and plan.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_labels: dict[str, int] = {}
    for batch in batches:
        all_labels.update(batch.labels)
        with open(out / f"week_{batch.week}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for rec in batch.records:
                row = [rec.participant_id, rec.week, rec.day, rec.segment.value]
                for feat in sorted(FEATURES):
                    value = rec.continuous.get(feat)
                    row.append("" if value is None else repr(value))
                token = rec.categorical.get(CATEGORICAL_FEATURE)
                row.append("" if token is None else token)
                writer.writerow(row)
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["participant_id", "score"])
        for pid in sorted(all_labels):
            writer.writerow([pid, all_labels[pid]])
    plan_doc = {
        "total_participants": plan.total_participants,
        "lonely_count": plan.lonely_count,
        "weekly_group_membership": {
            str(week): {g: sorted(m) for g, m in groups.items()}
            for week, groups in sorted(plan.weekly_group_membership.items())
        },
    }
    with open(out / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plan(path: str | Path) -> CohortPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CohortPlan(
        total_participants=int(doc["total_participants"]),
        lonely_count=int(doc["lonely_count"]),
        weekly_group_membership={
            int(week): {g: frozenset(m) for g, m in groups.items()}
            for week, groups in doc["weekly_group_membership"].items()
        },
    )


def load_batches(data_dir: str | Path) -> list[WeeklyBatch]:
    """Read week_<n>.csv files plus labels.csv back into WeeklyBatch values."""
    data = Path(data_dir)
    labels_path = data / "labels.csv"
    if not labels_path.exists():
        raise ValidationError(f"missing labels.csv in {data}")
    labels: dict[str, int] = {}
    with open(labels_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels[row["participant_id"]] = int(row["score"])

    week_files = sorted(
        data.glob("week_*.csv"), key=lambda p: int(p.stem.split("_")[1])
    )
    if not week_files:
        raise ValidationError(f"no week_<n>.csv files found in {data}")
    segments = {seg.value: seg for seg in DaySegment}
    batches = []
    for path in week_files:
        week = int(path.stem.split("_")[1])
        records = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                continuous: dict[str, float | None] = {}
                for feat in sorted(FEATURES):
                    raw = row[feat]
                    continuous[feat] = float(raw) if raw != "" else None
                token = row[CATEGORICAL_FEATURE]
                records.append(
                    FeatureRecord(
                        participant_id=row["participant_id"],
                        week=int(row["week"]),
                        day=row["day"],
                        segment=segments[row["segment"]],
                        continuous=continuous,
                        categorical={CATEGORICAL_FEATURE: token if token else None},
                    )
                )
        present = {rec.participant_id for rec in records}
        batches.append(
            WeeklyBatch(
                week=week,
                records=tuple(records),
                labels={pid: labels[pid] for pid in present if pid in labels},
            )
        )
    return batches
