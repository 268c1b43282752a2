"""Distance-to-prototype Dempster-Shafer layer.

Each prototype ``p^i`` turns the distance ``d^i = ||x - p^i||`` into a simple
support mass function

    s^i      = alpha^i * exp(-(eta^i * d^i)^2),   alpha^i = logistic(xi^i)
    m^i({j}) = h^i_j * s^i,                       h^i = softmax(logits^i)
    m^i(Omega) = 1 - s^i

and the ``n`` masses are merged with Dempster's rule. Because every ``m^i``
only has singletons and the frame as focal sets, the unnormalized
combination has the closed form

    mu({j})    = prod_i (1 - s^i (1 - h^i_j)) - prod_i (1 - s^i)
    mu(Omega)  = prod_i (1 - s^i)

which :func:`forward` evaluates in log space (rescaled by the largest term,
the scale cancels in the final normalization). :func:`combine_prototypes`
runs the pairwise recursion instead and serves as its cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .belief import Frame, MassVector
from .errors import (
    DegenerateNormalizer,
    InsufficientSamples,
    TraceMismatch,
    ValidationError,
)

KMEANS_ITERATIONS = 25
OWNER_LOGIT = 2.0


def logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PrototypeBank:
    """Learnable parameters of the DS layer.

    Arrays are float64: ``prototypes`` (n, P), ``eta`` (n,), ``xi`` (n,),
    ``membership_logits`` (n, M).
    """

    frame: Frame
    prototypes: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    membership_logits: np.ndarray

    def __post_init__(self):
        self.prototypes = np.array(self.prototypes, dtype=float, ndmin=2)
        self.eta = np.array(self.eta, dtype=float, ndmin=1)
        self.xi = np.array(self.xi, dtype=float, ndmin=1)
        self.membership_logits = np.array(self.membership_logits, dtype=float, ndmin=2)
        n = self.prototypes.shape[0]
        if self.eta.shape != (n,) or self.xi.shape != (n,):
            raise ValidationError("eta and xi need one entry per prototype")
        if self.membership_logits.shape != (n, self.frame.size):
            raise ValidationError(
                f"membership logits must be ({n}, {self.frame.size}), got {self.membership_logits.shape}"
            )

    @property
    def n(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        return logistic(self.xi)

    @property
    def membership(self) -> np.ndarray:
        return softmax_rows(self.membership_logits)

    def copy(self) -> "PrototypeBank":
        return replace(
            self,
            prototypes=self.prototypes.copy(),
            eta=self.eta.copy(),
            xi=self.xi.copy(),
            membership_logits=self.membership_logits.copy(),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {
            "prototypes": self.prototypes,
            "eta": self.eta,
            "xi": self.xi,
            "membership_logits": self.membership_logits,
        }


@dataclass
class DSForwardTrace:
    """Intermediates of one (batched) forward pass, kept for backward."""

    x: np.ndarray  # (N, P)
    diff: np.ndarray  # (N, n, P) x - p^i
    dist2: np.ndarray  # (N, n)
    kernel: np.ndarray  # (N, n) exp(-(eta d)^2)
    support: np.ndarray  # (N, n)
    membership: np.ndarray  # (n, M)
    factors: np.ndarray  # (N, n, M) 1 - s^i (1 - h^i_j)
    mu: np.ndarray  # (N, M + 1) unnormalized, rescaled
    masses: np.ndarray  # (N, M + 1) normalized output
    params_ref: tuple

    @property
    def distances(self) -> np.ndarray:
        return np.sqrt(self.dist2)

    def prototype_masses(self) -> np.ndarray:
        """Per-prototype masses ``m^i``, shape (N, n, M + 1)."""
        single = self.support[..., None] * self.membership[None]
        return np.concatenate([single, (1.0 - self.support)[..., None]], axis=-1)


@dataclass
class DSGradients:
    prototypes: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    membership_logits: np.ndarray
    x: np.ndarray


def support(x, bank: PrototypeBank, i: int) -> float:
    x = np.asarray(x, dtype=float)
    d2 = float(np.sum((x - bank.prototypes[i]) ** 2))
    return float(bank.alpha[i] * np.exp(-(bank.eta[i] ** 2) * d2))


def prototype_mass(s: float, h, frame: Frame) -> MassVector:
    h = np.asarray(h, dtype=float)
    if not 0.0 <= s < 1.0:
        raise ValidationError(f"support must lie in [0, 1), got {s}")
    return MassVector(frame, h * s, 1.0 - s)


def combine_prototypes(masses: list[MassVector]) -> MassVector:
    """Pairwise Dempster recursion over prototype masses, then normalization.

    The running accumulator is divided by its largest entry after every step
    so long chains do not underflow; the scale is irrelevant once normalized.
    """
    if not masses:
        raise ValidationError("need at least one mass vector")
    frame = masses[0].frame
    single = np.array(masses[0].singleton_masses, dtype=float)
    omega = masses[0].omega_mass
    for m in masses[1:]:
        if m.frame != frame:
            raise ValidationError("prototype masses on different frames")
        mj, mo = m.singleton_masses, m.omega_mass
        single = single * mj + single * mo + omega * mj
        omega = omega * mo
        scale = max(single.max(), omega)
        if not scale > 0:
            raise DegenerateNormalizer("combined masses vanished")
        single, omega = single / scale, omega / scale
    total = single.sum() + omega
    if not (np.isfinite(total) and total > 0):
        raise DegenerateNormalizer(f"normalizing sum is {total}")
    return MassVector(frame, single / total, omega / total)


def combine_product(masses: list[MassVector]) -> MassVector:
    """Closed product form of the same combination (unscaled, for small n)."""
    frame = masses[0].frame
    arr = np.array([m.as_array() for m in masses])
    b = np.prod(arr[:, -1])
    a = np.prod(arr[:, :-1] + arr[:, -1:], axis=0)
    mu = np.append(a - b, b)
    total = mu.sum()
    if not total > 0:
        raise DegenerateNormalizer(f"normalizing sum is {total}")
    return MassVector.from_array(frame, mu / total)


def _params_ref(bank: PrototypeBank) -> tuple:
    return (id(bank), bank.prototypes.copy(), bank.eta.copy(), bank.xi.copy(), bank.membership_logits.copy())


def forward(X, bank: PrototypeBank) -> DSForwardTrace:
    """Batched DS layer. ``X`` has shape (N, P); returns the full trace."""
    X = np.array(X, dtype=float, ndmin=2)
    if X.shape[1] != bank.dim:
        raise ValidationError(f"feature dimension {X.shape[1]} != prototype dimension {bank.dim}")
    diff = X[:, None, :] - bank.prototypes[None, :, :]
    dist2 = np.einsum("nip,nip->ni", diff, diff)
    kernel = np.exp(-(bank.eta**2)[None, :] * dist2)
    s = bank.alpha[None, :] * kernel
    h = bank.membership
    factors = 1.0 - s[..., None] * (1.0 - h[None])
    log_a = np.log(factors).sum(axis=1)  # (N, M)
    log_b = np.log1p(-s).sum(axis=1)  # (N,)
    shift = log_a.max(axis=1)
    a = np.exp(log_a - shift[:, None])
    b = np.exp(log_b - shift)
    # a_j - b computed as -a_j * expm1(log_b - log_a_j) to keep small differences exact
    mu_single = -a * np.expm1(log_b[:, None] - log_a)
    mu = np.concatenate([mu_single, b[:, None]], axis=1)
    total = mu.sum(axis=1)
    if not np.all(np.isfinite(total) & (total > 0)):
        raise DegenerateNormalizer("normalizing sum underflowed or is not finite")
    masses = mu / total[:, None]
    return DSForwardTrace(
        x=X,
        diff=diff,
        dist2=dist2,
        kernel=kernel,
        support=s,
        membership=h,
        factors=factors,
        mu=mu,
        masses=masses,
        params_ref=_params_ref(bank),
    )


def ds_forward(x, bank: PrototypeBank) -> tuple[MassVector, DSForwardTrace]:
    """Single-sample convenience wrapper around :func:`forward`."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("ds_forward takes one feature vector; use forward() for batches")
    trace = forward(x[None, :], bank)
    return MassVector.from_array(bank.frame, trace.masses[0]), trace


def _check_trace(trace: DSForwardTrace, X: np.ndarray, bank: PrototypeBank):
    ref = trace.params_ref
    same_params = (
        ref[1].shape == bank.prototypes.shape
        and np.array_equal(ref[1], bank.prototypes)
        and np.array_equal(ref[2], bank.eta)
        and np.array_equal(ref[3], bank.xi)
        and np.array_equal(ref[4], bank.membership_logits)
    )
    if not same_params or X.shape != trace.x.shape or not np.array_equal(X, trace.x):
        raise TraceMismatch("trace was produced by different inputs or parameters")


def backward(trace: DSForwardTrace, bank: PrototypeBank, dL_dm) -> DSGradients:
    """Exact gradients given ``dL/dm`` of shape (N, M + 1).

    Parameter gradients are summed over the batch; ``x`` gradients are per row.
    """
    g_all = np.array(dL_dm, dtype=float, ndmin=2)
    M = bank.frame.size
    if g_all.shape != trace.masses.shape:
        raise ValidationError(f"dL/dm has shape {g_all.shape}, expected {trace.masses.shape}")
    m, mo = trace.masses[:, :M], trace.masses[:, M]
    g, go = g_all[:, :M], g_all[:, M]
    gbar = np.einsum("nj,nj->n", g, m) + go * mo
    # gradients w.r.t. log of the two products
    grad_log_a = (m + mo[:, None]) * (g - gbar[:, None])
    grad_log_b = mo * (go - g.sum(axis=1) + (M - 1) * gbar)

    s, h = trace.support, trace.membership
    inv_f = 1.0 / trace.factors  # (N, n, M)
    dL_ds = -np.einsum("nj,nij->ni", grad_log_a, (1.0 - h)[None] * inv_f)
    dL_ds -= grad_log_b[:, None] / (1.0 - s)
    dL_dh = np.einsum("nj,ni,nij->ij", grad_log_a, s, inv_f)
    dL_dlogits = h * (dL_dh - np.sum(h * dL_dh, axis=1, keepdims=True))

    eta2 = bank.eta**2
    coef = dL_ds * s  # (N, n)
    alpha = bank.alpha
    return DSGradients(
        prototypes=2.0 * eta2[:, None] * np.einsum("ni,nip->ip", coef, trace.diff),
        eta=-2.0 * bank.eta * np.einsum("ni,ni->i", coef, trace.dist2),
        xi=np.einsum("ni,ni->i", dL_ds, trace.kernel) * alpha * (1.0 - alpha),
        membership_logits=dL_dlogits,
        x=-2.0 * np.einsum("ni,i,nip->np", coef, eta2, trace.diff),
    )


def ds_backward(trace: DSForwardTrace, x, bank: PrototypeBank, dL_dm) -> DSGradients:
    """Backward pass checked against the inputs that produced ``trace``."""
    X = np.array(x, dtype=float, ndmin=2)
    _check_trace(trace, X, bank)
    single = np.ndim(dL_dm) == 1
    grads = backward(trace, bank, dL_dm)
    if single:
        grads.x = grads.x[0]
    return grads


def _kmeans(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = X[rng.choice(len(X), size=k, replace=False)].copy()
    for _ in range(KMEANS_ITERATIONS):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for c in range(k):
            members = X[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers


def init_prototypes(features, labels, frame: Frame, n_per_class: int, seed: int) -> PrototypeBank:
    """Seed prototypes with per-class k-means centroids.

    ``alpha`` starts at 0.5, ``eta`` at the inverse mean pairwise prototype
    distance, and membership logits favour the owning class.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if n_per_class < 1:
        raise ValidationError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    protos, logits = [], []
    for c in range(frame.size):
        Xc = X[y == c]
        if len(Xc) < n_per_class:
            raise InsufficientSamples(
                f"class {frame.labels[c]!r} has {len(Xc)} samples, needs {n_per_class}"
            )
        protos.append(_kmeans(Xc, n_per_class, rng))
        row = np.zeros(frame.size)
        row[c] = OWNER_LOGIT
        logits.extend([row] * n_per_class)
    P = np.vstack(protos)
    n = len(P)
    pair = np.sqrt(((P[:, None] - P[None]) ** 2).sum(axis=2))
    mean_dist = pair[np.triu_indices(n, 1)].mean() if n > 1 else 0.0
    eta0 = 1.0 / mean_dist if mean_dist > 0 else 1.0
    return PrototypeBank(frame, P, np.full(n, eta0), np.zeros(n), np.array(logits))
