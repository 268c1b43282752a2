"""Expected-utility layer and the set-valued decision rule."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .belief import Frame, MassVector
from .errors import ValidationError
from .utility import Act, ActCatalog, ExtendedUtilityMatrix

# expected utilities closer than this to the maximum count as tied
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ExpectedUtilityVector:
    catalog: ActCatalog
    values: np.ndarray
    nu: float


@dataclass(frozen=True)
class Decision:
    act: Act
    expected_utility: float


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not 0.0 <= nu <= 1.0:
        raise ValidationError(f"nu must lie in [0, 1], got {nu}")
    return nu


def omega_coefficients(utilities: np.ndarray, nu: float) -> np.ndarray:
    """Weight of ``m(Omega)`` in each act's expected utility."""
    return nu * utilities.min(axis=1) + (1.0 - nu) * utilities.max(axis=1)


def expected_utility_matrix(masses: np.ndarray, utilities: np.ndarray, nu: float) -> np.ndarray:
    """Batched Hurwicz expected utilities.

    ``masses`` is (N, M + 1), ``utilities`` is (A, M); returns (N, A). Singleton
    focal sets have equal lower and upper utility, so only ``m(Omega)`` sees
    the pessimism index.
    """
    nu = _check_nu(nu)
    masses = np.atleast_2d(masses)
    M = utilities.shape[1]
    return masses[:, :M] @ utilities.T + masses[:, M:] * omega_coefficients(utilities, nu)[None, :]


def expected_utilities(m: MassVector, eum: ExtendedUtilityMatrix, nu: float) -> ExpectedUtilityVector:
    nu = _check_nu(nu)
    if m.frame.size != eum.catalog.size:
        raise ValidationError("mass vector and utility matrix disagree on the frame size")
    vals = expected_utility_matrix(m.as_array()[None], eum.extended, nu)[0]
    return ExpectedUtilityVector(eum.catalog, vals, nu)


def argmax_act_index(values: np.ndarray) -> np.ndarray:
    """Row-wise argmax; near-ties go to the earliest act in catalog order.

    Catalog order is by cardinality then lexicographic, so ties favour the
    more precise act.
    """
    values = np.atleast_2d(values)
    best = values.max(axis=1, keepdims=True)
    return np.argmax(values >= best - TIE_TOL, axis=1)


def decide(eu: ExpectedUtilityVector) -> Decision:
    if len(eu.catalog) == 0:
        raise ValidationError("empty catalog")
    k = int(argmax_act_index(eu.values)[0])
    return Decision(eu.catalog.acts[k], float(eu.values[k]))


def decision_backward(m: MassVector, eum: ExtendedUtilityMatrix, nu: float, dL_dE) -> np.ndarray:
    """Map ``dL/dE`` over the singleton acts back to ``dL/dm`` (length M + 1)."""
    nu = _check_nu(nu)
    return singleton_backward(np.asarray(dL_dE, dtype=float)[None], eum.singleton_rows(), nu)[0]


def singleton_backward(dL_dE: np.ndarray, singleton_utilities: np.ndarray, nu: float) -> np.ndarray:
    """Batched form: ``dL_dE`` is (N, M); returns (N, M + 1)."""
    d_single = dL_dE @ singleton_utilities
    d_omega = dL_dE @ omega_coefficients(singleton_utilities, nu)
    return np.concatenate([d_single, d_omega[:, None]], axis=1)


def probabilistic_expected_utilities(p: np.ndarray, eum: ExtendedUtilityMatrix) -> np.ndarray:
    """``E(f_A) = sum_k p_k * u_{A,k}`` for (N, M) probabilities; returns (N, A)."""
    return np.atleast_2d(p) @ eum.extended.T


def probabilistic_baseline_decide(p, eum: ExtendedUtilityMatrix) -> Decision:
    p = np.asarray(p, dtype=float)
    if p.shape != (eum.catalog.size,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError("p must be a probability vector over the frame")
    vals = probabilistic_expected_utilities(p, eum)[0]
    k = int(argmax_act_index(vals)[0])
    return Decision(eum.catalog.acts[k], float(vals[k]))


def write_expected_utilities_csv(path, rows: np.ndarray, catalog: ActCatalog, frame: Frame) -> None:
    """One row per sample, one column per act (keyed by act name)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", *catalog.names(frame)])
        for i, row in enumerate(np.atleast_2d(rows)):
            w.writerow([i, *(repr(float(v)) for v in row)])
