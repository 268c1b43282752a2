"""Choosing multi-class acts from a confusion matrix.

Columns of the precise-mode confusion matrix are normalized into per-class
feature vectors, clustered agglomeratively, and the dendrogram is cut where
the Calinski-Harabasz index peaks. Every merged group below the cut becomes
a candidate multi-class act.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .belief import Frame
from .errors import EmptyColumn, NoCandidateCut, UndefinedIndex, ValidationError
from .utility import Act

LINKAGES = ("single", "complete", "average", "ward")


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]``: samples predicted as class i whose true class is j."""

    frame: Frame
    counts: np.ndarray

    @property
    def usable(self) -> bool:
        return bool(np.all(self.counts.sum(axis=0) > 0))


def confusion_matrix(predicted, labels, frame: Frame) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predicted.shape != labels.shape:
        raise ValidationError("predictions and labels differ in length")
    M = frame.size
    counts = np.zeros((M, M), dtype=int)
    np.add.at(counts, (predicted, labels), 1)
    return ConfusionMatrix(frame, counts)


def normalize_columns(cm: ConfusionMatrix | np.ndarray) -> np.ndarray:
    """Divide each column by its total; column ``j`` is class ``j``'s feature."""
    counts = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=float)
    totals = counts.sum(axis=0)
    empty = np.flatnonzero(totals <= 0)
    if empty.size:
        raise EmptyColumn(f"columns {empty.tolist()} have no samples")
    return counts / totals


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    members: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class LinkageTree:
    """``M - 1`` merges; leaves are ``0..M-1`` and merge ``t`` creates node ``M + t``."""

    n_leaves: int
    merges: tuple[Merge, ...]
    linkage: str

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_scipy(self) -> np.ndarray:
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)

    def clusters_at(self, k: int) -> list[tuple[int, ...]]:
        """Clusters left after the first ``M - k`` merges, ordered by smallest member."""
        M = self.n_leaves
        if not 1 <= k <= M:
            raise ValidationError(f"cluster count {k} outside 1..{M}")
        groups = {i: (i,) for i in range(M)}
        for t, m in enumerate(self.merges[: M - k]):
            groups[M + t] = groups.pop(m.left) + groups.pop(m.right)
        return sorted((tuple(sorted(g)) for g in groups.values()), key=lambda g: g[0])

    def write_csv(self, path, frame: Frame | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "height", "size", "members"])
            for m in self.merges:
                names = [frame.labels[i] for i in m.members] if frame else [str(i) for i in m.members]
                w.writerow([m.left, m.right, repr(m.height), m.size, "+".join(names)])


def _pair_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def hac(features: np.ndarray, linkage: str = "ward") -> LinkageTree:
    """Agglomerative clustering of the class-feature columns.

    Single, complete and average linkage use the Lance-Williams updates on
    Euclidean distances. Ward updates squared distances (so two singletons
    merge at their plain Euclidean distance). Ties go to the pair of active
    nodes with the smallest ids.
    """
    if linkage not in LINKAGES:
        raise ValidationError(f"linkage must be one of {LINKAGES}")
    points = np.asarray(features, dtype=float).T
    M = points.shape[0]
    if M < 2:
        raise ValidationError("need at least two classes to cluster")
    base = _pair_distances(points)
    dist: dict[tuple[int, int], float] = {
        (i, j): float(base[i, j]) for i in range(M) for j in range(i + 1, M)
    }
    members = {i: (i,) for i in range(M)}
    merges = []
    for t in range(M - 1):
        (a, b), h = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        na, nb = len(members[a]), len(members[b])
        new = M + t
        active = [k for k in members if k not in (a, b)]
        updated = {}
        for k in active:
            dka = dist[(min(k, a), max(k, a))]
            dkb = dist[(min(k, b), max(k, b))]
            nk = len(members[k])
            if linkage == "single":
                d = min(dka, dkb)
            elif linkage == "complete":
                d = max(dka, dkb)
            elif linkage == "average":
                d = (na * dka + nb * dkb) / (na + nb)
            else:
                sq = ((na + nk) * dka**2 + (nb + nk) * dkb**2 - nk * h**2) / (na + nb + nk)
                d = float(np.sqrt(max(sq, 0.0)))
            updated[(k, new)] = d
        dist = {p: v for p, v in dist.items() if a not in p and b not in p}
        dist.update(updated)
        merged = tuple(sorted(members.pop(a) + members.pop(b)))
        members[new] = merged
        merges.append(Merge(a, b, h, merged))
    return LinkageTree(M, tuple(merges), linkage)


def _dispersions(points: np.ndarray, assignment: np.ndarray) -> tuple[float, float]:
    centre = points.mean(axis=0)
    between = within = 0.0
    for c in np.unique(assignment):
        group = points[assignment == c]
        cc = group.mean(axis=0)
        between += len(group) * float(((cc - centre) ** 2).sum())
        within += float(((group - cc) ** 2).sum())
    return between, within


def chi(features: np.ndarray, assignment) -> float:
    """Calinski-Harabasz index of a partition of the class-feature columns."""
    points = np.asarray(features, dtype=float).T
    assignment = np.asarray(assignment)
    M = len(points)
    if assignment.shape != (M,):
        raise ValidationError("need one cluster label per class")
    k = len(np.unique(assignment))
    if not 2 <= k <= M - 1:
        raise UndefinedIndex(f"CHI needs 2 <= k <= {M - 1} clusters, got {k}")
    between, within = _dispersions(points, assignment)
    if within == 0:
        raise UndefinedIndex("within-cluster dispersion is zero")
    return (between / (k - 1)) / (within / (M - k))


@dataclass
class ClusterCut:
    threshold: float
    n_clusters: int
    clusters: list[tuple[int, ...]]
    chi_values: dict[int, float] = field(default_factory=dict)


def _labels_for(clusters: list[tuple[int, ...]], M: int) -> np.ndarray:
    lab = np.empty(M, dtype=int)
    for c, group in enumerate(clusters):
        lab[list(group)] = c
    return lab


def best_cut(tree: LinkageTree, features: np.ndarray) -> ClusterCut:
    """Evaluate CHI for k = 2..M-1 and keep the maximizer (smallest k on ties)."""
    M = tree.n_leaves
    if M < 3:
        raise NoCandidateCut("need at least three classes to choose a cut")
    scores: dict[int, float] = {}
    for k in range(2, M):
        groups = tree.clusters_at(k)
        try:
            scores[k] = chi(features, _labels_for(groups, M))
        except UndefinedIndex:
            # zero within-cluster spread: a perfect partition
            scores[k] = np.inf
    best_k = max(scores, key=lambda k: (scores[k], -k))
    threshold = tree.merges[M - best_k - 1].height
    return ClusterCut(threshold, best_k, tree.clusters_at(best_k), scores)


def select_acts(tree: LinkageTree, features: np.ndarray) -> tuple[list[Act], ClusterCut]:
    """Multi-class acts for every group formed up to the CHI-maximizing cut.

    Nested groups are all kept, e.g. ``{a, b}`` and ``{a, b, c}`` when both
    merge below the threshold.
    """
    cut = best_cut(tree, features)
    M = tree.n_leaves
    acts = {Act(m.members) for m in tree.merges[: M - cut.n_clusters] if m.size < M}
    return sorted(acts, key=Act.sort_key), cut


def write_acts_json(path, acts: list[Act], frame: Frame) -> None:
    payload = [[frame.labels[i] for i in a.members] for a in acts]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_acts_json(path, frame: Frame) -> list[list[int]]:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, list) or not all(isinstance(s, list) for s in payload):
        raise ValidationError(f"{path}: expected a JSON list of lists of class names")
    return [[frame.index(name) for name in s] for s in payload]
