"""Insertion-only incremental density clustering plus cohort identity tracking.

The registry maintains, after every insertion, the same partition a batch
DBSCAN run would produce on the current point set with the current density
threshold. That makes results independent of insertion order: a point is
core when its eps-ball holds at least min_pts points (self included),
clusters are the connected components of the core-core eps graph, and a
border point joins the cluster of its smallest-id core neighbor.

min_pts = max(min_pts_floor, ceil(density_fraction * point_count)) grows
with the stream; a rising threshold can demote marginal cores, which
triggers a partition rebuild.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import ValidationError


def _min_pts_for(n: int, density_fraction: float, floor: int) -> int:
    # the epsilon guards float artifacts like 0.1 * 210 -> 21.000000000000004
    return max(floor, math.ceil(density_fraction * n - 1e-9))


def batch_dbscan(
    points: dict[str, np.ndarray], eps: float, min_pts: int
) -> tuple[dict[str, frozenset[str]], frozenset[str]]:
    """Textbook DBSCAN, used as the oracle for the incremental registry.

    Returns (clusters, noise) where clusters maps each cluster's smallest
    core point id to its member set. Border points reachable from several
    clusters go to the cluster of their smallest-id core neighbor.
    """
    ids = sorted(points)
    if not ids:
        return {}, frozenset()
    X = np.array([points[i] for i in ids], dtype=float)
    n = len(ids)
    diffs = X[:, None, :] - X[None, :, :]
    within = (diffs**2).sum(axis=2) <= eps * eps
    counts = within.sum(axis=1)
    core = counts >= min_pts

    comp = np.full(n, -1, dtype=int)
    n_comp = 0
    for start in range(n):
        if not core[start] or comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = n_comp
        while stack:
            u = stack.pop()
            for v in np.nonzero(within[u] & core)[0]:
                if comp[v] < 0:
                    comp[v] = n_comp
                    stack.append(v)
        n_comp += 1

    members: dict[int, set[str]] = {c: set() for c in range(n_comp)}
    noise = set()
    for i in range(n):
        if core[i]:
            members[comp[i]].add(ids[i])
            continue
        core_nbrs = np.nonzero(within[i] & core)[0]
        if len(core_nbrs) == 0:
            noise.add(ids[i])
        else:
            # ids are scanned in sorted order, so the first is the smallest
            members[comp[core_nbrs[0]]].add(ids[i])

    clusters = {}
    for c, mem in members.items():
        key = min(ids[i] for i in range(n) if core[i] and comp[i] == c)
        clusters[key] = frozenset(mem)
    return clusters, frozenset(noise)


@dataclass(frozen=True)
class InsertOutcome:
    kind: str  # noise | joined_existing | seeded_new | merged
    cluster_id: str | None = None  # canonical internal id after the insert
    merged: tuple[str, ...] = ()  # pre-insert ids of clusters united
    cohort: str | None = None  # tracked label, when the cluster has one


@dataclass(frozen=True)
class ClusterSnapshot:
    week: int
    cohorts: dict[str, frozenset[str]]  # cohort label -> member point ids
    noise: frozenset[str]

    def sizes(self) -> dict[str, int]:
        return {label: len(members) for label, members in self.cohorts.items()}


def track_identity(
    prev: dict[str, frozenset[str]],
    current: dict[str, frozenset[str]],
    vanished: dict[str, frozenset[str]] | None = None,
    next_index: int = 1,
) -> tuple[dict[str, str], dict[str, frozenset[str]], int]:
    """Carry stable cohort labels from one weekly partition to the next.

    Each current cluster takes the previous cohort label with maximal
    Jaccard overlap when that overlap is at least 0.5. Overlap is computed
    on the previous snapshot's claimed points (the stream is insertion-only,
    so a stable cohort can more than double between snapshots; points that
    did not exist last time must not dilute its identity). A cluster
    matching nothing live is checked against vanished cohorts' last
    memberships (re-emergence) before receiving a fresh label. Fresh labels
    are handed out in decreasing size order. Returns (mapping internal
    id -> label, updated vanished memberships, updated next label index).
    """
    vanished = dict(vanished or {})
    universe: frozenset[str] = frozenset().union(*prev.values()) if prev else frozenset()

    def jaccard(a: frozenset, b: frozenset) -> float:
        if not a and not b:
            return 1.0
        return len(a & b) / len(a | b)

    def label_rank(label: str) -> int:
        return int(label[1:]) if label[1:].isdigit() else 10**9

    mapping: dict[str, str] = {}
    taken: set[str] = set()

    candidates = []
    for key, members in current.items():
        restricted = members & universe
        for label, prev_members in prev.items():
            j = jaccard(restricted, prev_members)
            if j >= 0.5:
                candidates.append((-j, label_rank(label), key, label))
    for score, _, key, label in sorted(candidates):
        if key in mapping or label in taken:
            continue
        mapping[key] = label
        taken.add(label)

    # re-emergence: a cluster recovering a vanished cohort's last membership
    revived = []
    for key in sorted(set(current) - set(mapping)):
        best = None
        for label, old_members in vanished.items():
            if label in taken:
                continue
            j = jaccard(current[key] & old_members, old_members)
            if j >= 0.5 and (best is None or (j, -label_rank(label)) > best[0]):
                best = ((j, -label_rank(label)), label)
        if best is not None:
            label = best[1]
            mapping[key] = label
            taken.add(label)
            revived.append(label)
    for label in revived:
        del vanished[label]

    fresh = sorted(
        set(current) - set(mapping), key=lambda k: (-len(current[k]), k)
    )
    for key in fresh:
        mapping[key] = f"G{next_index}"
        next_index += 1

    for label, prev_members in prev.items():
        if label not in taken:
            vanished[label] = prev_members
    return mapping, vanished, next_index


class _UnionFind:
    def __init__(self) -> None:
        self.parent: list[int] = []

    def add(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> tuple[int, int] | None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return None
        self.parent[rb] = ra
        return ra, rb


class ClusterRegistry:
    """Single-writer incremental DBSCAN state over a growing point set."""

    def __init__(
        self, eps: float, density_fraction: float = 0.1, min_pts_floor: int = 5
    ) -> None:
        if eps <= 0:
            raise ValidationError(f"eps must be positive, got {eps}")
        if not 0 < density_fraction < 1:
            raise ValidationError(
                f"density_fraction must lie in (0, 1), got {density_fraction}"
            )
        self.eps = eps
        self.density_fraction = density_fraction
        self.min_pts_floor = min_pts_floor

        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        self._vectors = np.empty((0, 0))
        self._neighbors: list[list[int]] = []
        self._counts = np.empty(0, dtype=np.int64)
        self._core = np.empty(0, dtype=bool)
        self._uf = _UnionFind()
        self._live: dict[int, str] = {}  # root index -> canonical cluster id

        # cohort identity tracking across snapshots
        self.cohort_ids: dict[str, str] = {}  # internal id -> label
        self._prev_memberships: dict[str, frozenset[str]] = {}
        self._vanished: dict[str, frozenset[str]] = {}
        self._next_label_index = 1

    # ------------------------------------------------------------ properties

    @property
    def point_count(self) -> int:
        return len(self._ids)

    @property
    def min_pts(self) -> int:
        return _min_pts_for(
            max(self.point_count, 1), self.density_fraction, self.min_pts_floor
        )

    @property
    def dim(self) -> int | None:
        return self._vectors.shape[1] if self._ids else None

    # ------------------------------------------------------------ internals

    def _grow_capacity(self, dim: int) -> None:
        n = len(self._ids)
        if self._vectors.shape[1] != dim:
            self._vectors = np.empty((max(16, n), dim))
        if n >= self._vectors.shape[0]:
            extra = np.empty((self._vectors.shape[0], dim))
            self._vectors = np.vstack([self._vectors[:n], extra])

    def _canonical_key(self, indices: list[int]) -> str:
        return min(self._ids[i] for i in indices)

    def _rebuild_components(self) -> None:
        """Recompute the core-core components from adjacency (post demotion)."""
        n = len(self._ids)
        self._uf = _UnionFind()
        for _ in range(n):
            self._uf.add()
        self._live = {}
        core_idx = np.nonzero(self._core[:n])[0]
        if len(core_idx) == 0:
            return
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        for i in core_idx:
            nbrs = np.array(self._neighbors[i], dtype=np.int64)
            if len(nbrs) == 0:
                continue
            nbrs = nbrs[self._core[nbrs]]
            rows.append(np.full(len(nbrs), i, dtype=np.int64))
            cols.append(nbrs)
        if rows:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
            graph = sparse.coo_matrix(
                (np.ones(len(r), dtype=np.int8), (r, c)), shape=(n, n)
            )
            _, labels = connected_components(graph, directed=False)
        else:
            labels = np.arange(n)
        groups: dict[int, list[int]] = {}
        for i in core_idx:
            groups.setdefault(int(labels[i]), []).append(int(i))
        for members in groups.values():
            root = members[0]
            for m in members[1:]:
                self._uf.union(root, m)
            root = self._uf.find(root)
            self._live[root] = self._canonical_key(members)

    def _assignment_index(self, i: int) -> int | None:
        """Root of point i's cluster, or None for noise."""
        if self._core[i]:
            return self._uf.find(i)
        best: str | None = None
        best_idx = -1
        for j in self._neighbors[i]:
            if self._core[j] and (best is None or self._ids[j] < best):
                best = self._ids[j]
                best_idx = j
        if best is None:
            return None
        return self._uf.find(best_idx)

    def assignment_of(self, point_id: str) -> str | None:
        """Canonical internal cluster id of a point, or None for noise."""
        if point_id not in self._index:
            raise ValidationError(f"unknown point id {point_id!r}")
        root = self._assignment_index(self._index[point_id])
        return None if root is None else self._live[root]

    def cohort_of(self, point_id: str) -> str | None:
        """Tracked cohort label of a point's cluster, when one exists."""
        internal = self.assignment_of(point_id)
        if internal is None:
            return None
        return self.cohort_ids.get(internal)

    # ------------------------------------------------------------ mutation

    def insert(self, point_id: str, vector) -> InsertOutcome:
        if point_id in self._index:
            raise ValidationError(f"duplicate point id {point_id!r}")
        x = np.asarray(vector, dtype=float).ravel()
        if self._ids and x.shape[0] != self._vectors.shape[1]:
            raise ValidationError(
                f"vector dimension {x.shape[0]} does not match registry "
                f"dimension {self._vectors.shape[1]}"
            )

        pre_live_keys = sorted(self._live.values())  # canonical ids before insert

        n = len(self._ids)
        self._grow_capacity(x.shape[0])
        idx = n
        self._ids.append(point_id)
        self._index[point_id] = idx
        self._vectors[idx] = x
        self._uf.add()

        if n:
            d2 = ((self._vectors[:n] - x) ** 2).sum(axis=1)
            nbrs = np.nonzero(d2 <= self.eps * self.eps)[0]
        else:
            nbrs = np.empty(0, dtype=np.int64)
        self._neighbors.append([int(j) for j in nbrs])
        for j in nbrs:
            self._neighbors[j].append(idx)

        self._counts = np.append(self._counts, 0)
        self._core = np.append(self._core, False)
        self._counts[nbrs] += 1
        self._counts[idx] = len(nbrs) + 1

        new_min_pts = self.min_pts
        new_core = self._counts[: idx + 1] >= new_min_pts
        demoted = self._core[: idx + 1] & ~new_core
        promoted = np.nonzero(~self._core[: idx + 1] & new_core)[0]
        self._core[: idx + 1] = new_core

        if demoted.any():
            self._rebuild_components()
        else:
            for c in promoted:
                root = self._uf.find(int(c))
                if root not in self._live:
                    self._live[root] = self._ids[int(c)]
                c_nbrs = np.array(self._neighbors[int(c)], dtype=np.int64)
                c_nbrs = c_nbrs[self._core[c_nbrs]] if len(c_nbrs) else c_nbrs
                for b in c_nbrs:
                    ra, rb = self._uf.find(int(c)), self._uf.find(int(b))
                    if ra == rb:
                        continue
                    key_a = self._live.get(ra, self._ids[ra])
                    key_b = self._live.get(rb, self._ids[rb])
                    merged = self._uf.union(ra, rb)
                    if merged is None:
                        continue
                    keep = merged[0]
                    self._live.pop(ra, None)
                    self._live.pop(rb, None)
                    self._live[keep] = min(key_a, key_b)

        # classify the outcome against the pre-insert live clusters
        my_root = self._assignment_index(idx)
        if my_root is None:
            return InsertOutcome(kind="noise")
        cluster_id = self._live[my_root]
        absorbed = []
        for key in pre_live_keys:
            anchor = self._index[key]  # the pre-insert canonical core point
            anchor_root = self._assignment_index(anchor)
            if anchor_root is not None and anchor_root == my_root:
                absorbed.append(key)
        cohort = self.cohort_ids.get(cluster_id)
        if len(absorbed) >= 2:
            return InsertOutcome(
                kind="merged",
                cluster_id=cluster_id,
                merged=tuple(sorted(absorbed)),
                cohort=cohort,
            )
        if len(absorbed) == 1:
            return InsertOutcome(kind="joined_existing", cluster_id=cluster_id, cohort=cohort)
        return InsertOutcome(kind="seeded_new", cluster_id=cluster_id, cohort=cohort)

    # ------------------------------------------------------------ observation

    def partition(self) -> tuple[dict[str, frozenset[str]], frozenset[str]]:
        """Current clusters (canonical id -> members) and noise ids."""
        n = len(self._ids)
        clusters: dict[str, set[str]] = {key: set() for key in self._live.values()}
        noise: set[str] = set()
        for i in range(n):
            root = self._assignment_index(i)
            if root is None:
                noise.add(self._ids[i])
            else:
                clusters[self._live[root]].add(self._ids[i])
        return {k: frozenset(v) for k, v in clusters.items()}, frozenset(noise)

    def snapshot(self, week: int) -> ClusterSnapshot:
        """Read-only copy of the partition with stable cohort labels.

        Taking a snapshot advances identity tracking: current clusters are
        matched to the previous snapshot's cohorts (or to vanished cohorts
        on re-emergence), and new clusters receive fresh labels.
        """
        partition, noise = self.partition()
        mapping, vanished, next_index = track_identity(
            self._prev_memberships,
            partition,
            self._vanished,
            self._next_label_index,
        )
        self._vanished = vanished
        self._next_label_index = next_index
        self.cohort_ids = dict(mapping)
        cohorts = {mapping[key]: members for key, members in partition.items()}
        self._prev_memberships = dict(cohorts)
        return ClusterSnapshot(week=week, cohorts=cohorts, noise=noise)

    def copy(self) -> "ClusterRegistry":
        """Independent deep copy; the original is never affected by the copy."""
        new = ClusterRegistry(
            eps=self.eps,
            density_fraction=self.density_fraction,
            min_pts_floor=self.min_pts_floor,
        )
        new._ids = list(self._ids)
        new._index = dict(self._index)
        new._vectors = self._vectors.copy()
        new._neighbors = [list(nbrs) for nbrs in self._neighbors]
        new._counts = self._counts.copy()
        new._core = self._core.copy()
        new._uf = _UnionFind()
        new._uf.parent = list(self._uf.parent)
        new._live = dict(self._live)
        new.cohort_ids = dict(self.cohort_ids)
        new._prev_memberships = dict(self._prev_memberships)
        new._vanished = dict(self._vanished)
        new._next_label_index = self._next_label_index
        return new

    # ------------------------------------------------------------ persistence

    def to_json(self) -> dict:
        n = len(self._ids)
        return {
            "eps": self.eps,
            "density_fraction": self.density_fraction,
            "min_pts_floor": self.min_pts_floor,
            "ids": list(self._ids),
            "vectors": self._vectors[:n].tolist(),
            "prev_memberships": {
                label: sorted(m) for label, m in self._prev_memberships.items()
            },
            "vanished": {label: sorted(m) for label, m in self._vanished.items()},
            "next_label_index": self._next_label_index,
            "cohort_ids": dict(self.cohort_ids),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ClusterRegistry":
        reg = cls(
            eps=float(doc["eps"]),
            density_fraction=float(doc["density_fraction"]),
            min_pts_floor=int(doc["min_pts_floor"]),
        )
        ids = list(doc["ids"])
        vectors = np.array(doc["vectors"], dtype=float)
        if ids:
            reg._bulk_load(ids, vectors)
        reg._prev_memberships = {
            label: frozenset(m) for label, m in doc["prev_memberships"].items()
        }
        reg._vanished = {label: frozenset(m) for label, m in doc["vanished"].items()}
        reg._next_label_index = int(doc["next_label_index"])
        reg.cohort_ids = dict(doc["cohort_ids"])
        return reg

    def _bulk_load(self, ids: list[str], vectors: np.ndarray) -> None:
        """Rebuild full state from a point set (partition is canonical)."""
        n = len(ids)
        self._ids = list(ids)
        self._index = {pid: i for i, pid in enumerate(ids)}
        self._vectors = vectors.astype(float).copy()
        d2 = ((vectors[:, None, :] - vectors[None, :, :]) ** 2).sum(axis=2)
        within = d2 <= self.eps * self.eps
        np.fill_diagonal(within, False)
        self._neighbors = [list(np.nonzero(within[i])[0]) for i in range(n)]
        self._counts = within.sum(axis=1).astype(np.int64) + 1
        self._core = self._counts >= self.min_pts
        self._rebuild_components()
