"""The full classifier: feature net -> DS layer -> expected-utility layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dslayer
from .belief import Frame
from .decision import argmax_act_index, expected_utility_matrix, singleton_backward
from .dslayer import PrototypeBank
from .errors import ValidationError
from .featurenet import FeatureNet
from .utility import ActCatalog, ExtendedUtilityMatrix, build_catalog, extend_utility_matrix

DEFAULT_LOG_EPSILON = 1e-7


def loss(eu_singletons, target: int, log_epsilon: float = DEFAULT_LOG_EPSILON) -> float:
    """Binary cross-entropy of singleton expected utilities against a one-hot target."""
    return float(batch_loss(np.atleast_2d(eu_singletons), np.array([target]), log_epsilon)[0])


def batch_loss(E: np.ndarray, y: np.ndarray, log_epsilon: float = DEFAULT_LOG_EPSILON) -> np.ndarray:
    Y = np.zeros_like(E)
    Y[np.arange(len(y)), y] = 1.0
    Ec = np.clip(E, log_epsilon, 1.0 - log_epsilon)
    return -(Y * np.log(Ec) + (1.0 - Y) * np.log1p(-Ec)).sum(axis=1)


def loss_grad(eu_singletons, target: int, log_epsilon: float = DEFAULT_LOG_EPSILON) -> np.ndarray:
    return batch_loss_grad(np.atleast_2d(eu_singletons), np.array([target]), log_epsilon)[0]


def batch_loss_grad(E: np.ndarray, y: np.ndarray, log_epsilon: float = DEFAULT_LOG_EPSILON) -> np.ndarray:
    """Derivative of :func:`batch_loss`; zero where the clamp is active."""
    Y = np.zeros_like(E)
    Y[np.arange(len(y)), y] = 1.0
    inside = (E > log_epsilon) & (E < 1.0 - log_epsilon)
    Ec = np.clip(E, log_epsilon, 1.0 - log_epsilon)
    return np.where(inside, -Y / Ec + (1.0 - Y) / (1.0 - Ec), 0.0)


@dataclass
class GradientBundle:
    """Gradients mirroring the classifier's learnable tensors."""

    bank: dict[str, np.ndarray]
    net: list[dict[str, np.ndarray]]

    def items(self):
        for name, g in self.bank.items():
            yield f"ds.{name}", g
        for k, layer in enumerate(self.net):
            for name, g in layer.items():
                yield f"net.{k}.{name}", g

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for _, g in self.items())


@dataclass
class EvidentialClassifier:
    frame: Frame
    net: FeatureNet
    bank: PrototypeBank
    utilities: np.ndarray
    gamma: float = 0.8
    nu: float = 1.0
    catalog: ActCatalog | None = None
    _eum_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.utilities = np.array(self.utilities, dtype=float)
        if self.catalog is None:
            self.catalog = build_catalog(self.frame.size, "all")
        if self.net.output_dim != self.bank.dim:
            raise ValidationError(
                f"network emits {self.net.output_dim} features but prototypes have {self.bank.dim}"
            )

    @property
    def eum(self) -> ExtendedUtilityMatrix:
        return self.utility_matrix()

    def utility_matrix(self, gamma: float | None = None, catalog: ActCatalog | None = None) -> ExtendedUtilityMatrix:
        gamma = self.gamma if gamma is None else float(gamma)
        catalog = self.catalog if catalog is None else catalog
        key = (gamma, catalog)
        if key not in self._eum_cache:
            self._eum_cache[key] = extend_utility_matrix(self.utilities, catalog, gamma)
        return self._eum_cache[key]

    def features(self, X) -> np.ndarray:
        return self.net.forward(X)[0]

    def masses(self, X) -> np.ndarray:
        """DS-layer output, shape (N, M + 1)."""
        return dslayer.forward(self.features(X), self.bank).masses

    def expected(self, X, gamma=None, nu=None, catalog=None, masses=None) -> np.ndarray:
        nu = self.nu if nu is None else nu
        m = self.masses(X) if masses is None else masses
        return expected_utility_matrix(m, self.utility_matrix(gamma, catalog).extended, nu)

    def decide(self, X, gamma=None, nu=None, catalog=None, masses=None) -> np.ndarray:
        """Index into the catalog of the chosen act for each row."""
        return argmax_act_index(self.expected(X, gamma, nu, catalog, masses))

    def predict_precise(self, X, masses=None) -> np.ndarray:
        """Class index chosen when only singleton acts are allowed."""
        m = self.masses(X) if masses is None else masses
        E = expected_utility_matrix(m, self.utilities, self.nu)
        return argmax_act_index(E)

    def singleton_expected(self, masses: np.ndarray, nu: float) -> np.ndarray:
        return expected_utility_matrix(masses, self.utilities, nu)

    def loss_and_grads(self, X, y, nu=None, log_epsilon=DEFAULT_LOG_EPSILON) -> tuple[float, GradientBundle]:
        """Mean loss over the batch and its exact gradient."""
        nu = self.nu if nu is None else nu
        y = np.asarray(y, dtype=int)
        feats, net_trace = self.net.forward(X)
        trace = dslayer.forward(feats, self.bank)
        E = self.singleton_expected(trace.masses, nu)
        N = len(y)
        value = float(batch_loss(E, y, log_epsilon).sum() / N)
        dE = batch_loss_grad(E, y, log_epsilon) / N
        dm = singleton_backward(dE, self.utilities, nu)
        ds = dslayer.backward(trace, self.bank, dm)
        net_grads = self.net.backward(net_trace, ds.x)[0] if self.net.layers else []
        bank_grads = {
            "prototypes": ds.prototypes,
            "eta": ds.eta,
            "xi": ds.xi,
            "membership_logits": ds.membership_logits,
        }
        return value, GradientBundle(bank_grads, net_grads)

    def mean_loss(self, X, y, nu=None, log_epsilon=DEFAULT_LOG_EPSILON) -> float:
        nu = self.nu if nu is None else nu
        E = self.singleton_expected(self.masses(X), nu)
        return float(batch_loss(E, np.asarray(y, dtype=int), log_epsilon).mean())

    def param_items(self):
        """``(name, array)`` for every learnable tensor, in a fixed order."""
        for name, arr in self.bank.params().items():
            yield f"ds.{name}", arr
        for k, name, arr in self.net.params():
            yield f"net.{k}.{name}", arr

    def copy(self) -> "EvidentialClassifier":
        return EvidentialClassifier(
            self.frame, self.net.copy(), self.bank.copy(), self.utilities.copy(),
            self.gamma, self.nu, self.catalog,
        )
