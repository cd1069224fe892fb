"""Weekly replay orchestration: ingest, cluster, refresh, vote, report.

One `step` per week, strictly in order. The step never mutates its input
state: all work happens on a copy, so any mid-step failure leaves the
caller holding the untouched pre-step state. All randomness derives from
(config.rng_seed, week, purpose), which makes checkpoint resume
byte-identical to an uninterrupted run.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cluster import ClusterRegistry
from .core import EngineConfig, LearnerConfig, ValidationError, WeeklyBatch, label_from_score
from .ensemble import (
    EvalRow,
    LabeledRow,
    ModelPool,
    VoteOutcome,
    evaluate_week,
    pool_from_json,
    pool_to_json,
    refresh_generic,
    refresh_specialized,
    vote,
)
from .learners.base import derive_seed
from .preprocess import (
    FittedPipeline,
    fit_pipeline,
    pipeline_from_json,
    pipeline_to_json,
    vectorize_week,
)
from . import reporting

CHECKPOINT_SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or version-mismatched checkpoints."""


@dataclass
class EngineState:
    config: EngineConfig
    current_week: int = 0
    pipeline: FittedPipeline | None = None
    registry: ClusterRegistry | None = None
    pool: ModelPool = field(default_factory=ModelPool)
    rows: list[LabeledRow] = field(default_factory=list)
    holdout: frozenset[str] = frozenset()
    scores: dict[str, int] = field(default_factory=dict)
    run_log: list[dict] = field(default_factory=list)

    def copy(self) -> "EngineState":
        return EngineState(
            config=self.config,
            current_week=self.current_week,
            pipeline=self.pipeline,
            registry=None if self.registry is None else self.registry.copy(),
            pool=ModelPool(
                generic=self.pool.generic,
                specialized=dict(self.pool.specialized),
                min_cohort_size=self.pool.min_cohort_size,
                min_class_count=self.pool.min_class_count,
            ),
            rows=list(self.rows),
            holdout=self.holdout,
            scores=dict(self.scores),
            run_log=[dict(entry) for entry in self.run_log],
        )


@dataclass(frozen=True)
class WeeklyReport:
    week: int
    cohort_sizes: dict[str, int]  # this week's points per cohort label
    noise_count: int
    participants_seen: int
    assignments: dict[str, str | None]  # this week's point id -> cohort label
    eval_rows: list[EvalRow]
    votes: dict[str, VoteOutcome]  # participant id -> outcome
    omitted: tuple[str, ...]
    events: tuple[str, ...]


def new_state(config: EngineConfig) -> EngineState:
    return EngineState(
        config=config,
        registry=ClusterRegistry(
            eps=config.eps,
            density_fraction=config.density_fraction,
            min_pts_floor=config.min_pts_floor,
        ),
        pool=ModelPool(
            min_cohort_size=config.min_cohort_size,
            min_class_count=config.min_class_count,
        ),
    )


def _point_id(pid: str, week: int) -> str:
    return f"{pid}|w{week:02d}"


def _pick_holdout(scores: dict[str, int], config: EngineConfig) -> frozenset[str]:
    """Stratified participant hold-out, fixed once labels first arrive."""
    total = len(scores)
    target = int(round(config.holdout_fraction * total))
    by_label: dict[int, list[str]] = {0: [], 1: []}
    for pid in sorted(scores):
        by_label[label_from_score(scores[pid], config.score_threshold)].append(pid)
    ideal = {
        lab: target * len(pids) / total for lab, pids in by_label.items() if pids
    }
    counts = {lab: math.floor(x) for lab, x in ideal.items()}
    leftovers = sorted(
        ideal, key=lambda lab: (-(ideal[lab] - math.floor(ideal[lab])), lab)
    )
    i = 0
    while sum(counts.values()) < target and leftovers:
        lab = leftovers[i % len(leftovers)]
        if counts[lab] < len(by_label[lab]):
            counts[lab] += 1
        i += 1
    rng = np.random.default_rng(derive_seed(config.rng_seed, "holdout"))
    chosen: set[str] = set()
    for lab in sorted(counts):
        pids = by_label[lab]
        take = min(counts[lab], len(pids))
        if take:
            chosen.update(rng.choice(pids, size=take, replace=False).tolist())
    return frozenset(chosen)


def step(state: EngineState, batch: WeeklyBatch) -> tuple[EngineState, WeeklyReport]:
    """Run one week: preprocess, cluster, refresh models, vote, evaluate."""
    if batch.week != state.current_week + 1:
        raise ValidationError(
            f"batch week {batch.week} out of order; expected week "
            f"{state.current_week + 1}"
        )
    if not batch.records:
        raise ValidationError(f"week {batch.week}: empty batch")

    st = state.copy()
    week = batch.week
    events: list[str] = []

    refit = st.pipeline is None or (
        st.config.refit_every_n_weeks > 0
        and (week - 1) % st.config.refit_every_n_weeks == 0
    )
    if refit:
        st.pipeline = fit_pipeline(list(batch.records), st.config.pca_variance_target)
        events.append(f"week {week}: preprocessing pipeline fitted")

    vectors, omitted = vectorize_week(batch, st.pipeline)
    for pid in omitted:
        events.append(f"week {week}: participant {pid} omitted, no surviving records")

    week_points: dict[str, str] = {}
    for pv in sorted(vectors, key=lambda v: v.participant_id):
        pt = _point_id(pv.participant_id, week)
        st.registry.insert(pt, pv.values)
        week_points[pv.participant_id] = pt
    snapshot = st.registry.snapshot(week)

    st.scores.update(batch.labels)
    if not st.holdout and st.scores:
        st.holdout = _pick_holdout(st.scores, st.config)
        events.append(
            f"week {week}: fixed hold-out of {len(st.holdout)} participants"
        )

    vector_of = {pv.participant_id: pv.values for pv in vectors}
    for pid in sorted(vector_of):
        if pid in st.scores:
            st.rows.append(
                LabeledRow(
                    point_id=week_points[pid],
                    participant_id=pid,
                    week=week,
                    vector=vector_of[pid],
                    label=label_from_score(st.scores[pid], st.config.score_threshold),
                )
            )

    train_rows = [r for r in st.rows if r.participant_id not in st.holdout]
    st.pool, gen_events = refresh_generic(
        st.pool, train_rows, st.config, derive_seed(st.config.rng_seed, "generic", week), week
    )
    events.extend(gen_events)
    st.pool, spec_events = refresh_specialized(
        st.pool,
        snapshot,
        train_rows,
        st.config,
        derive_seed(st.config.rng_seed, "specialized", week),
        week,
    )
    events.extend(spec_events)

    point_label: dict[str, str | None] = {}
    for label, members in snapshot.cohorts.items():
        for pt in members:
            point_label[pt] = label
    assignments = {
        pt: point_label.get(pt) for pt in week_points.values()
    }

    votes: dict[str, VoteOutcome] = {}
    if st.pool.generic is not None:
        for pid in sorted(vector_of):
            votes[pid] = vote(
                st.pool,
                vector_of[pid],
                point_label.get(week_points[pid]),
                st.config,
            )

    holdout_rows = [
        (row, point_label.get(row.point_id))
        for row in st.rows
        if row.week == week and row.participant_id in st.holdout
    ]
    eval_rows: list[EvalRow] = []
    if st.pool.generic is not None and holdout_rows:
        eval_rows = evaluate_week(st.pool, holdout_rows, snapshot, st.config)
    elif st.pool.generic is not None:
        raise ValidationError(f"week {week}: empty hold-out, cannot evaluate")

    cohort_sizes: dict[str, int] = {}
    for label, members in snapshot.cohorts.items():
        count = len(members & set(week_points.values()))
        if count:
            cohort_sizes[label] = count
    noise_count = len(snapshot.noise & set(week_points.values()))

    st.current_week = week
    for event in events:
        st.run_log.append({"week": week, "event": event})

    report = WeeklyReport(
        week=week,
        cohort_sizes=cohort_sizes,
        noise_count=noise_count,
        participants_seen=len(vector_of),
        assignments=assignments,
        eval_rows=eval_rows,
        votes=votes,
        omitted=tuple(omitted),
        events=tuple(events),
    )
    return st, report


# ---------------------------------------------------------------- checkpoints


def save(state: EngineState, path: str | Path) -> Path:
    """Write the full engine state as a gzip-compressed JSON checkpoint."""
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": asdict(state.config),
        "current_week": state.current_week,
        "pipeline": None if state.pipeline is None else pipeline_to_json(state.pipeline),
        "registry": None if state.registry is None else state.registry.to_json(),
        "pool": pool_to_json(state.pool),
        "rows": [
            {
                "point_id": r.point_id,
                "participant_id": r.participant_id,
                "week": r.week,
                "vector": r.vector.tolist(),
                "label": r.label,
            }
            for r in state.rows
        ],
        "holdout": sorted(state.holdout),
        "scores": dict(sorted(state.scores.items())),
        "run_log": state.run_log,
    }
    out = Path(path)
    payload = json.dumps(doc, sort_keys=True).encode("utf-8")
    with gzip.GzipFile(out, "wb", mtime=0) as fh:
        fh.write(payload)
    return out


def load(path: str | Path) -> EngineState:
    try:
        with gzip.open(path, "rb") as fh:
            payload = fh.read()
        doc = json.loads(payload.decode("utf-8"))
    except (OSError, EOFError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has schema version {version!r}, "
            f"expected {CHECKPOINT_SCHEMA_VERSION}"
        )
    config_doc = dict(doc["config"])
    config_doc["learners"] = LearnerConfig(**config_doc["learners"])
    config = EngineConfig(**config_doc)
    return EngineState(
        config=config,
        current_week=int(doc["current_week"]),
        pipeline=None if doc["pipeline"] is None else pipeline_from_json(doc["pipeline"]),
        registry=None if doc["registry"] is None else ClusterRegistry.from_json(doc["registry"]),
        pool=pool_from_json(doc["pool"]),
        rows=[
            LabeledRow(
                point_id=r["point_id"],
                participant_id=r["participant_id"],
                week=int(r["week"]),
                vector=np.array(r["vector"], dtype=float),
                label=int(r["label"]),
            )
            for r in doc["rows"]
        ],
        holdout=frozenset(doc["holdout"]),
        scores={pid: int(s) for pid, s in doc["scores"].items()},
        run_log=list(doc["run_log"]),
    )


# ---------------------------------------------------------------- replay


def run_replay(
    config_or_state: EngineConfig | EngineState,
    batches: list[WeeklyBatch],
    out_dir: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    plot: bool = False,
) -> tuple[list[WeeklyReport], EngineState]:
    """Fold `step` over consecutive weekly batches, writing reports as files.

    Accepts either a fresh config or a loaded state (resume). Batches must
    cover consecutive weeks continuing from the state's current week.
    """
    if isinstance(config_or_state, EngineState):
        state = config_or_state
    else:
        state = new_state(config_or_state)

    expected = state.current_week + 1
    for batch in batches:
        if batch.week != expected:
            raise ValidationError(
                f"missing week {expected}: next batch is week {batch.week}"
            )
        expected += 1

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    reports: list[WeeklyReport] = []
    for batch in batches:
        state, report = step(state, batch)
        reports.append(report)
        if out is not None:
            reporting.write_weekly_report(out, report)
            reporting.write_clusters(out, report)
            reporting.write_votes(out, report)
            reporting.append_run_log(out, report)
        if checkpoint_path is not None:
            save(state, checkpoint_path)
    if out is not None and reports:
        reporting.write_summary(out, reports)
        if plot:
            reporting.write_metric_charts(out, reports)
    return reports, state
