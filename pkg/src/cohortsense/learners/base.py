"""Dataset container and the model kind registry shared by all learners."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..core import ValidationError

MODEL_SCHEMA_VERSION = 1


class ModelKind(Enum):
    LOGREG = "logreg"
    LINEAR_SVM = "linear_svm"
    RANDOM_FOREST = "random_forest"
    GBT = "gbt"


# Fixed iteration order wherever "all four kinds" are trained or voted.
KIND_ORDER = (
    ModelKind.LOGREG,
    ModelKind.LINEAR_SVM,
    ModelKind.RANDOM_FOREST,
    ModelKind.GBT,
)


@dataclass(frozen=True)
class Dataset:
    """Rows of (vector, binary label, participant id), held as arrays."""

    vectors: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int, values in {0, 1}
    participant_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise ValidationError("dataset vectors must be a 2-D array")
        n = self.vectors.shape[0]
        if self.labels.shape != (n,) or len(self.participant_ids) != n:
            raise ValidationError("dataset rows misaligned across fields")
        bad = set(np.unique(self.labels)) - {0, 1}
        if bad:
            raise ValidationError(f"labels must be 0/1, found {sorted(bad)}")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            vectors=self.vectors[indices],
            labels=self.labels[indices],
            participant_ids=tuple(self.participant_ids[i] for i in indices),
        )

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.labels.sum())
        return len(self) - ones, ones

    def canonical_order(self) -> np.ndarray:
        """Row permutation sorted by participant id, then row content.

        All seeded sampling is performed on this ordering so results do not
        depend on how the caller happened to arrange rows.
        """
        keys = [
            (self.participant_ids[i], int(self.labels[i]), self.vectors[i].tobytes())
            for i in range(len(self))
        ]
        return np.array(sorted(range(len(self)), key=lambda i: keys[i]), dtype=int)

    def canonicalized(self) -> "Dataset":
        return self.subset(self.canonical_order())


def from_rows(rows: list[tuple[np.ndarray, int, str]]) -> Dataset:
    if not rows:
        raise ValidationError("cannot build a dataset from zero rows")
    vectors = np.array([np.asarray(v, dtype=float) for v, _, _ in rows])
    labels = np.array([lab for _, lab, _ in rows], dtype=int)
    pids = tuple(pid for _, _, pid in rows)
    return Dataset(vectors=vectors, labels=labels, participant_ids=pids)


def derive_seed(seed: int, *parts: object) -> int:
    """Deterministically mix a root seed with context labels."""
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, int):
            entropy.append(part & 0xFFFFFFFF)
        else:
            for byte in str(part).encode("utf-8"):
                entropy.append(byte)
    state = np.random.SeedSequence(entropy).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def model_to_json(model) -> dict:
    """Serialize any trained model to a JSON-ready dict with a schema tag."""
    doc = model.to_json()
    doc["schema_version"] = MODEL_SCHEMA_VERSION
    doc["kind"] = model.kind.value
    return doc


def model_from_json(doc: dict):
    from .linear import LinearSVMModel, LogRegModel
    from .trees import ForestModel, GBTModel

    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValidationError(f"unsupported model schema version: {version!r}")
    kind = ModelKind(doc["kind"])
    loaders = {
        ModelKind.LOGREG: LogRegModel.from_json,
        ModelKind.LINEAR_SVM: LinearSVMModel.from_json,
        ModelKind.RANDOM_FOREST: ForestModel.from_json,
        ModelKind.GBT: GBTModel.from_json,
    }
    return loaders[kind](doc)
