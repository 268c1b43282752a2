"""Averaged utility, averaged cardinality, novelty rates and McNemar's test."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .utility import ActCatalog, ExtendedUtilityMatrix

OUTLIER = -1  # label index used for out-of-frame samples


@dataclass
class DatasetSplit:
    """Inliers carry a class index; outliers carry none."""

    inliers: np.ndarray
    inlier_labels: np.ndarray
    outliers: np.ndarray

    @classmethod
    def from_labels(cls, X, y) -> "DatasetSplit":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        mask = y != OUTLIER
        return cls(X[mask], y[mask], X[~mask])


def average_utility(decisions, labels, eum: ExtendedUtilityMatrix) -> float:
    """Mean of ``u_{A(i), y_i}``; ``decisions`` are catalog indices."""
    decisions = np.asarray(decisions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if len(decisions) == 0:
        return float("nan")
    return float(eum.extended[decisions, labels].mean())


def average_cardinality(decisions, catalog: ActCatalog) -> float:
    decisions = np.asarray(decisions, dtype=int)
    if len(decisions) == 0:
        return float("nan")
    return float(catalog.cardinalities[decisions].mean())


def omega_rate(decisions, catalog: ActCatalog) -> float:
    decisions = np.asarray(decisions, dtype=int)
    if len(decisions) == 0:
        return float("nan")
    return float(np.mean(decisions == catalog.omega_index))


def set_correct(decisions, labels, catalog: ActCatalog) -> np.ndarray:
    """True where the chosen set contains the true label."""
    return np.array([int(y) in catalog.acts[int(d)] for d, y in zip(decisions, labels)], dtype=bool)


def mcnemar(correct_a, correct_b) -> tuple[float, float]:
    """Continuity-corrected McNemar test on paired correctness flags."""
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    n01 = int(np.sum(a & ~b))
    n10 = int(np.sum(~a & b))
    return mcnemar_counts(n01, n10)


def mcnemar_counts(b: int, c: int) -> tuple[float, float]:
    if b + c == 0:
        return 0.0, 1.0
    stat = (abs(b - c) - 1.0) ** 2 / (b + c)
    return float(stat), float(stats.chi2.sf(stat, df=1))


@dataclass
class EvalReport:
    gamma: float
    nu: float
    n_inliers: int
    n_outliers: int
    averaged_utility: float
    averaged_cardinality: float
    precise_accuracy: float
    omega_rate_inliers: float
    omega_rate_outliers: float
    decision_counts: dict[str, int] = field(default_factory=dict)

    CSV_FIELDS = (
        "gamma", "nu", "n_inliers", "n_outliers", "averaged_utility", "averaged_cardinality",
        "precise_accuracy", "omega_rate_inliers", "omega_rate_outliers",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    def csv_row(self) -> list:
        d = self.to_dict()
        return [d[k] for k in self.CSV_FIELDS]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_FIELDS)
            w.writerow([repr(v) if isinstance(v, float) else v for v in self.csv_row()])


def evaluate(model, X, y, gamma=None, nu=None, catalog=None) -> EvalReport:
    """Score a classifier on a labelled set that may contain outliers."""
    gamma = model.gamma if gamma is None else float(gamma)
    nu = model.nu if nu is None else float(nu)
    catalog = model.catalog if catalog is None else catalog
    eum = model.utility_matrix(gamma, catalog)
    split = DatasetSplit.from_labels(X, y)
    names = catalog.names(model.frame)
    counts = {name: 0 for name in names}

    if len(split.inliers):
        m_in = model.masses(split.inliers)
        dec_in = model.decide(None, gamma, nu, catalog, masses=m_in)
        precise = model.predict_precise(None, masses=m_in)
        acc = float(np.mean(precise == split.inlier_labels))
    else:
        dec_in = np.zeros(0, dtype=int)
        acc = float("nan")
    if len(split.outliers):
        dec_out = model.decide(split.outliers, gamma, nu, catalog)
    else:
        dec_out = np.zeros(0, dtype=int)
    for d in np.concatenate([dec_in, dec_out]):
        counts[names[int(d)]] += 1

    return EvalReport(
        gamma=gamma,
        nu=nu,
        n_inliers=len(split.inliers),
        n_outliers=len(split.outliers),
        averaged_utility=average_utility(dec_in, split.inlier_labels, eum),
        averaged_cardinality=average_cardinality(dec_in, catalog),
        precise_accuracy=acc,
        omega_rate_inliers=omega_rate(dec_in, catalog),
        omega_rate_outliers=omega_rate(dec_out, catalog),
        decision_counts=counts,
    )
