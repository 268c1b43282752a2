"""End-to-end SGD, pessimism-index tuning and finite-difference gradient checks."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceDetected, ValidationError
from .evaluation import average_utility
from .model import (
    DEFAULT_LOG_EPSILON,
    EvidentialClassifier,
    GradientBundle,
    batch_loss,
    batch_loss_grad,
    loss,
    loss_grad,
)

__all__ = [
    "TrainingConfig", "EpochMetrics", "train", "sgd_step", "tune_nu", "nu_curve",
    "gradient_check", "GradientCheckReport", "loss", "loss_grad", "batch_loss", "batch_loss_grad",
    "DEFAULT_NU_GRID", "initialize_model",
]

DEFAULT_NU_GRID = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 16
    prototypes_per_class: int = 2
    seed: int = 0
    nu: float = 1.0
    gamma: float = 0.8
    log_epsilon: float = DEFAULT_LOG_EPSILON
    validation_fraction: float = 0.0

    def __post_init__(self):
        # zero is accepted so a run can be frozen; negative rates are not
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.prototypes_per_class < 1:
            raise ValidationError("epochs >= 0, batch_size >= 1 and prototypes_per_class >= 1 required")
        if not 0.0 < self.log_epsilon <= 1e-3:
            raise ValidationError("log_epsilon must lie in (0, 1e-3]")
        if not 0.0 <= self.nu <= 1.0:
            raise ValidationError("nu must lie in [0, 1]")
        if not 0.5 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0.5, 1]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


def sgd_step(model: EvidentialClassifier, grads: GradientBundle, lr: float) -> None:
    for name, g in grads.bank.items():
        getattr(model.bank, name)[...] -= lr * g
    for layer, layer_grads in zip(model.net.layers, grads.net):
        params = layer.params()
        for name, g in layer_grads.items():
            params[name][...] -= lr * g


def _split(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(round(fraction * n))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _metrics(model, X, y, nu, eps) -> tuple[float, float]:
    if len(y) == 0:
        return float("nan"), float("nan")
    m = model.masses(X)
    E = model.singleton_expected(m, nu)
    return float(batch_loss(E, y, eps).mean()), float(np.mean(model.predict_precise(None, masses=m) == y))


def train(
    X,
    y,
    model: EvidentialClassifier,
    config: TrainingConfig,
    log_path=None,
) -> tuple[EvidentialClassifier, list[EpochMetrics]]:
    """Minibatch SGD on a copy of ``model``; returns it with per-epoch metrics.

    All randomness (validation split, shuffling) comes from ``config.seed``.
    Outlier rows (label -1) must be removed beforehand.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if np.any(y < 0) or np.any(y >= model.frame.size):
        raise ValidationError("training labels must be class indices of the frame")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    tr, va = _split(len(y), config.validation_fraction, rng)
    Xtr, ytr, Xva, yva = X[tr], y[tr], X[va], y[va]
    history: list[EpochMetrics] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(ytr))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads = model.loss_and_grads(Xtr[idx], ytr[idx], config.nu, config.log_epsilon)
            if not np.isfinite(value) or not grads.all_finite():
                raise DivergenceDetected(f"non-finite loss or gradient in epoch {epoch}")
            sgd_step(model, grads, config.learning_rate)
        tl, ta = _metrics(model, Xtr, ytr, config.nu, config.log_epsilon)
        vl, vacc = _metrics(model, Xva, yva, config.nu, config.log_epsilon)
        if not np.isfinite(tl):
            raise DivergenceDetected(f"training loss is {tl} after epoch {epoch}")
        history.append(EpochMetrics(epoch, tl, vl, ta, vacc))
    if log_path is not None:
        write_metrics_csv(log_path, history)
    return model, history


def write_metrics_csv(path, history: Sequence[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.val_loss), repr(h.train_acc), repr(h.val_acc)])


def nu_curve(model: EvidentialClassifier, X, y, gamma: float, nu_grid=DEFAULT_NU_GRID, catalog=None) -> list[tuple[float, float]]:
    """Averaged utility on labelled inliers for each pessimism index."""
    y = np.asarray(y, dtype=int)
    m = model.masses(X)
    eum = model.utility_matrix(gamma, catalog)
    out = []
    for nu in nu_grid:
        dec = model.decide(None, gamma, nu, catalog, masses=m)
        out.append((float(nu), average_utility(dec, y, eum)))
    return out


def tune_nu(model: EvidentialClassifier, X, y, gamma: float, nu_grid=DEFAULT_NU_GRID, catalog=None) -> float:
    """Grid value with the highest averaged utility; ties go to the smaller value."""
    curve = nu_curve(model, X, y, gamma, nu_grid, catalog)
    best_nu, best_au = None, -np.inf
    for nu, au in sorted(curve):
        if au > best_au + 1e-12:
            best_nu, best_au = nu, au
    return best_nu


@dataclass
class GradientCheckReport:
    max_relative_error: float
    tolerance: float
    passed: bool
    per_tensor: dict[str, float] = field(default_factory=dict)
    n_checked: int = 0

    def summary(self) -> str:
        lines = [f"{name}: {err:.3e}" for name, err in self.per_tensor.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"max relative error {self.max_relative_error:.3e} (tolerance {self.tolerance:g}) {verdict}")
        return "\n".join(lines)


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """``|a - b| / max(|a|, |b|, floor)``; the floor keeps near-zero partials meaningful."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(
    model: EvidentialClassifier,
    X,
    y,
    step: float = 1e-6,
    tolerance: float = 1e-4,
    nu: float | None = None,
    analytic: Callable[[EvidentialClassifier, np.ndarray, np.ndarray], GradientBundle] | None = None,
    log_epsilon: float = DEFAULT_LOG_EPSILON,
) -> GradientCheckReport:
    """Compare analytic gradients of the mean loss with central differences.

    ``analytic`` overrides the gradient under test (used to self-test the
    harness). The model is perturbed in place and restored.
    """
    nu = model.nu if nu is None else nu
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if analytic is None:
        grads = model.loss_and_grads(X, y, nu, log_epsilon)[1]
    else:
        grads = analytic(model, X, y)
    analytic_map = dict(grads.items())
    per_tensor: dict[str, float] = {}
    worst = 0.0
    count = 0
    for name, arr in model.param_items():
        g = analytic_map[name]
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = model.mean_loss(X, y, nu, log_epsilon)
            flat[k] = orig - step
            down = model.mean_loss(X, y, nu, log_epsilon)
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * step)
        err = float(relative_error(g, numeric).max()) if arr.size else 0.0
        per_tensor[name] = err
        worst = max(worst, err)
        count += arr.size
    return GradientCheckReport(worst, tolerance, worst < tolerance, per_tensor, count)


def initialize_model(X, y, frame, config: TrainingConfig, net=None, utilities=None, catalog=None) -> EvidentialClassifier:
    """Fresh classifier whose prototypes are seeded from the (untrained) net's features."""
    from .dslayer import init_prototypes
    from .featurenet import FeatureNet

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if net is None:
        net = FeatureNet((X.shape[1],))
    feats = net.forward(X)[0]
    bank = init_prototypes(feats, y, frame, config.prototypes_per_class, config.seed)
    U = np.eye(frame.size) if utilities is None else utilities
    return EvidentialClassifier(frame, net, bank, U, config.gamma, config.nu, catalog)
