"""Act catalogs, maximum-entropy OWA weights and extended utility matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .belief import Frame
from .errors import CatalogTooLarge, ValidationError

MAX_FULL_CATALOG = 20
BISECTION_MAX_ITER = 200
BISECTION_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Act:
    """Assignment of a sample to a non-empty set of class indices."""

    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(sorted(set(int(i) for i in self.members)))
        if not members:
            raise ValidationError("an act needs at least one class")
        if members[0] < 0:
            raise ValidationError("class indices must be non-negative")
        object.__setattr__(self, "members", members)

    @property
    def cardinality(self) -> int:
        return len(self.members)

    def sort_key(self):
        return (len(self.members), self.members)

    def name(self, frame: Frame) -> str:
        return "+".join(frame.labels[i] for i in self.members)

    def __contains__(self, j) -> bool:
        return j in self.members


@dataclass(frozen=True)
class ActCatalog:
    """Ordered acts: by cardinality, then lexicographically on indices."""

    size: int
    acts: tuple[Act, ...]

    def __post_init__(self):
        acts = tuple(sorted(set(self.acts), key=Act.sort_key))
        M = self.size
        if any(a.members[-1] >= M for a in acts):
            raise ValidationError(f"act outside frame of size {M}")
        present = set(acts)
        missing = [j for j in range(M) if Act((j,)) not in present]
        if missing:
            raise ValidationError(f"catalog lacks singleton acts for classes {missing}")
        if Act(tuple(range(M))) not in present:
            raise ValidationError("catalog lacks the whole-frame act")
        object.__setattr__(self, "acts", acts)

    def __len__(self) -> int:
        return len(self.acts)

    def __iter__(self):
        return iter(self.acts)

    def index(self, act: Act) -> int:
        return self.acts.index(act)

    @property
    def singleton_indices(self) -> list[int]:
        return [k for k, a in enumerate(self.acts) if a.cardinality == 1]

    @property
    def omega_index(self) -> int:
        return len(self.acts) - 1

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([a.cardinality for a in self.acts])

    def names(self, frame: Frame) -> list[str]:
        return [a.name(frame) for a in self.acts]

    def act_by_name(self, name: str, frame: Frame) -> Act:
        wanted = Act(tuple(frame.index(s) for s in name.split("+")))
        if wanted not in self.acts:
            raise ValidationError(f"act {name!r} not in catalog")
        return wanted

    def multi_class_acts(self) -> list[Act]:
        return [a for a in self.acts if 1 < a.cardinality < self.size]


def build_catalog(M: int, mode: str = "all", selected: Iterable[Sequence[int]] = ()) -> ActCatalog:
    """Catalog of every non-empty subset (``all``) or singletons + frame + ``selected``."""
    if M < 2:
        raise ValidationError("need at least two classes")
    singles = [Act((j,)) for j in range(M)]
    omega = Act(tuple(range(M)))
    if mode == "all":
        if M > MAX_FULL_CATALOG:
            raise CatalogTooLarge(f"2^{M} - 1 acts is too many; select acts instead")
        acts = [Act(c) for k in range(1, M + 1) for c in combinations(range(M), k)]
    elif mode == "selected":
        extra = []
        for subset in selected:
            act = Act(tuple(subset))
            if act.members[-1] >= M:
                raise ValidationError(f"selected set {list(subset)} outside frame of size {M}")
            extra.append(act)
        acts = singles + extra + [omega]
    else:
        raise ValidationError(f"unknown catalog mode {mode!r}")
    return ActCatalog(M, tuple(acts))


@dataclass(frozen=True)
class OWAWeights:
    cardinality: int
    gamma: float
    weights: tuple[float, ...]

    def tdi(self) -> float:
        return tolerance_degree(self.weights)

    def entropy(self) -> float:
        g = np.asarray(self.weights)
        g = g[g > 0]
        return float(-(g * np.log(g)).sum())


def tolerance_degree(weights) -> float:
    """Imprecision tolerance degree of an OWA weight vector (1 for a single weight)."""
    g = np.asarray(weights, dtype=float)
    n = len(g)
    if n == 1:
        return 1.0
    k = np.arange(1, n + 1)
    return float(np.sum((n - k) / (n - 1) * g))


def _geometric(t: float, n: int) -> np.ndarray:
    w = t ** np.arange(n, dtype=float)
    return w / w.sum()


@lru_cache(maxsize=None)
def _meowa(n: int, gamma: float) -> tuple[float, ...]:
    if n == 1 or gamma == 1.0:
        return (1.0,) + (0.0,) * (n - 1)
    if gamma == 0.5:
        return (1.0 / n,) * n
    # tolerance degree of t**(k-1) weights falls monotonically from 1 (t -> 0) to 0.5 (t = 1)
    lo, hi = 0.0, 1.0
    t = 0.5
    for _ in range(BISECTION_MAX_ITER):
        t = 0.5 * (lo + hi)
        resid = tolerance_degree(_geometric(t, n)) - gamma
        if abs(resid) <= BISECTION_TOL:
            break
        if resid > 0:
            lo = t
        else:
            hi = t
    return tuple(float(v) for v in _geometric(t, n))


def meowa_weights(cardinality: int, gamma: float) -> OWAWeights:
    """Maximum-entropy OWA weights with the given tolerance degree.

    The optimum is geometric, ``g_k`` proportional to ``t**(k-1)``; ``t`` is
    found by bisection on (0, 1].
    """
    n = int(cardinality)
    if n < 1:
        raise ValidationError("cardinality must be >= 1")
    gamma = float(gamma)
    if not 0.5 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0.5, 1], got {gamma}")
    return OWAWeights(n, gamma, _meowa(n, gamma))


@dataclass(frozen=True)
class ExtendedUtilityMatrix:
    catalog: ActCatalog
    original: np.ndarray  # (M, M)
    extended: np.ndarray  # (len(catalog), M)
    gamma: float

    def row(self, act: Act) -> np.ndarray:
        return self.extended[self.catalog.index(act)]

    def singleton_rows(self) -> np.ndarray:
        return self.extended[self.catalog.singleton_indices]

    def with_catalog(self, catalog: ActCatalog) -> "ExtendedUtilityMatrix":
        return extend_utility_matrix(self.original, catalog, self.gamma)

    def with_gamma(self, gamma: float) -> "ExtendedUtilityMatrix":
        return extend_utility_matrix(self.original, self.catalog, gamma)


def extend_utility_matrix(original, catalog: ActCatalog, gamma: float) -> ExtendedUtilityMatrix:
    """OWA-aggregate each act's original rows, column by column."""
    U = np.array(original, dtype=float)
    M = catalog.size
    if U.shape != (M, M):
        raise ValidationError(f"original utilities must be {M}x{M}, got {U.shape}")
    if np.any(U < 0) or np.any(U > 1):
        raise ValidationError("utilities must lie in [0, 1]")
    rows = []
    for act in catalog:
        sub = U[list(act.members)]
        if act.cardinality == 1:
            rows.append(sub[0])
            continue
        g = np.asarray(meowa_weights(act.cardinality, gamma).weights)
        ordered = -np.sort(-sub, axis=0)  # k-th largest per column
        rows.append(g @ ordered)
    U.setflags(write=False)
    ext = np.array(rows)
    ext.setflags(write=False)
    return ExtendedUtilityMatrix(catalog, U, ext, float(gamma))


def identity_utilities(M: int) -> np.ndarray:
    return np.eye(M)


def write_utility_csv(path, eum: ExtendedUtilityMatrix, frame: Frame) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["act", *frame.labels])
        for name, row in zip(eum.catalog.names(frame), eum.extended):
            w.writerow([name, *(repr(float(v)) for v in row)])


def read_utility_csv(path, frame: Frame) -> tuple[list[Act], np.ndarray]:
    """Read acts and their utility rows; header must list the frame's classes."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][1:] != list(frame.labels):
        raise ValidationError(f"utility header must be act,{','.join(frame.labels)}")
    acts, values = [], []
    for r in rows[1:]:
        if not r:
            continue
        acts.append(Act(tuple(frame.index(s) for s in r[0].split("+"))))
        values.append([float(v) for v in r[1:]])
    return acts, np.array(values)


def read_original_utilities(path, frame: Frame) -> np.ndarray:
    """Original M x M utilities from a utility CSV (singleton rows are used)."""
    acts, values = read_utility_csv(path, frame)
    U = np.full((frame.size, frame.size), np.nan)
    for act, row in zip(acts, values):
        if act.cardinality == 1:
            U[act.members[0]] = row
    if np.isnan(U).any():
        raise ValidationError("utility file must give a row for every singleton act")
    return U
