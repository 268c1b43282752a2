"""Frames of discernment, mass functions and Dempster's rule.

Two representations are used. :class:`GeneralMassFunction` holds arbitrary
focal sets (as frozensets of class indices) and is what :func:`combine_dempster`
works on. :class:`MassVector` is the restricted form produced by the DS layer:
masses on the ``M`` singletons plus the whole frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import TotalConflict, ValidationError

NORM_TOL = 1e-9
CLAMP_BELOW = 1e-15


@dataclass(frozen=True)
class Frame:
    """Ordered, duplicate-free list of class labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(l) for l in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError("a frame needs at least two classes")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate class labels in {labels}")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def omega(self) -> frozenset[int]:
        return frozenset(range(self.size))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"label {label!r} not in frame {self.labels}") from None

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class GeneralMassFunction:
    """Mass function with arbitrary non-empty focal sets."""

    frame: Frame
    focal: Mapping[frozenset, float] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[frozenset, float] = {}
        M = self.frame.size
        for subset, mass in self.focal.items():
            subset = frozenset(int(i) for i in subset)
            if not subset:
                raise ValidationError("mass on the empty set is not allowed")
            if min(subset) < 0 or max(subset) >= M:
                raise ValidationError(f"focal set {sorted(subset)} outside frame of size {M}")
            mass = float(mass)
            if mass < 0 or not np.isfinite(mass):
                raise ValidationError(f"invalid mass {mass} on {sorted(subset)}")
            clean[subset] = clean.get(subset, 0.0) + mass
        object.__setattr__(self, "focal", clean)

    def __getitem__(self, subset) -> float:
        return self.focal.get(frozenset(subset), 0.0)

    def total(self) -> float:
        return float(sum(self.focal.values()))

    def to_mass_vector(self) -> "MassVector":
        """Convert to the singleton+frame form; fails for other focal sets."""
        M = self.frame.size
        single = np.zeros(M)
        omega = 0.0
        for subset, mass in self.focal.items():
            if len(subset) == 1:
                single[next(iter(subset))] += mass
            elif len(subset) == M:
                omega += mass
            else:
                raise ValidationError(f"focal set {sorted(subset)} is neither a singleton nor the frame")
        return MassVector(self.frame, single, omega)


@dataclass(frozen=True)
class MassVector:
    """Masses on each singleton ``{w_j}`` and on the whole frame."""

    frame: Frame
    singleton_masses: np.ndarray
    omega_mass: float

    def __post_init__(self):
        arr = np.array(self.singleton_masses, dtype=float)
        if arr.shape != (self.frame.size,):
            raise ValidationError(f"expected {self.frame.size} singleton masses, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "singleton_masses", arr)
        object.__setattr__(self, "omega_mass", float(self.omega_mass))

    def as_array(self) -> np.ndarray:
        """``(m({w_1}), ..., m({w_M}), m(Omega))``."""
        return np.append(self.singleton_masses, self.omega_mass)

    @classmethod
    def from_array(cls, frame: Frame, values: Sequence[float]) -> "MassVector":
        values = np.asarray(values, dtype=float)
        return cls(frame, values[:-1], values[-1])

    def to_general(self) -> GeneralMassFunction:
        focal = {frozenset([j]): float(v) for j, v in enumerate(self.singleton_masses) if v > 0}
        if self.omega_mass > 0:
            focal[self.frame.omega] = self.omega_mass
        return GeneralMassFunction(self.frame, focal)


AnyMass = Union[MassVector, GeneralMassFunction]


def vacuous(frame: Frame) -> GeneralMassFunction:
    """Total ignorance: all mass on the frame."""
    return GeneralMassFunction(frame, {frame.omega: 1.0})


def is_normalized(m: AnyMass, tol: float = NORM_TOL) -> bool:
    if isinstance(m, MassVector):
        values = m.as_array()
    else:
        values = np.fromiter(m.focal.values(), dtype=float)
    return bool(np.all(values >= 0) and abs(values.sum() - 1.0) <= tol)


def combine_dempster(m1: GeneralMassFunction, m2: GeneralMassFunction) -> GeneralMassFunction:
    """Dempster's rule: conjunctive combination renormalized by ``1 - conflict``.

    Raises :class:`TotalConflict` when every pair of focal sets is disjoint.
    """
    if m1.frame != m2.frame:
        raise ValidationError("mass functions are defined on different frames")
    joint: dict[frozenset, float] = {}
    conflict = 0.0
    for (b, mb), (c, mc) in product(m1.focal.items(), m2.focal.items()):
        inter = b & c
        if inter:
            joint[inter] = joint.get(inter, 0.0) + mb * mc
        else:
            conflict += mb * mc
    denom = 1.0 - conflict
    if denom <= CLAMP_BELOW or not joint:
        raise TotalConflict(f"conflict {conflict:.17g} leaves nothing to renormalize")
    combined = {a: v / denom for a, v in joint.items()}
    # drop denormal-scale residue, then renormalize once more
    combined = {a: v for a, v in combined.items() if v >= CLAMP_BELOW}
    total = sum(combined.values())
    return GeneralMassFunction(m1.frame, {a: v / total for a, v in combined.items()})


def lower_upper_expectation(m: AnyMass, act_utilities: Sequence[float]) -> tuple[float, float]:
    """Lower and upper expected utility of one act row."""
    u = np.asarray(act_utilities, dtype=float)
    if isinstance(m, MassVector):
        single = float(m.singleton_masses @ u)
        return single + m.omega_mass * u.min(), single + m.omega_mass * u.max()
    lo = hi = 0.0
    for subset, mass in m.focal.items():
        vals = u[sorted(subset)]
        lo += mass * vals.min()
        hi += mass * vals.max()
    return lo, hi


def hurwicz_expectation(m: AnyMass, act_utilities: Sequence[float], nu: float) -> float:
    """Generalized Hurwicz criterion ``nu * lower + (1 - nu) * upper``."""
    if not 0.0 <= nu <= 1.0:
        raise ValidationError(f"pessimism index must lie in [0, 1], got {nu}")
    u = np.asarray(act_utilities, dtype=float)
    if u.shape != (m.frame.size,):
        raise ValidationError(f"act row must have {m.frame.size} entries")
    lo, hi = lower_upper_expectation(m, u)
    return nu * lo + (1.0 - nu) * hi
