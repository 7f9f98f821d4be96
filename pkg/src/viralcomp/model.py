"""Two-strain competition dynamics, with and without antiviral treatment.

Strain A is the original lineage and strain B the better-adapted mutant::

    dV_A/dt = r_a (1 - (V_A + V_B)/k_a) V_A - c_a u V_A
    dV_B/dt = r_b (1 - (V_A + V_B)/k_b) V_B - c_b u V_B

Time and density are dimensionless throughout.

All functions accept a state as any length-2 sequence. They also broadcast
over arrays of shape ``(2, ...)``, which the phase-portrait code relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Phenotype:
    """Growth and competition rates of the two strains.

    ``k_a < k_b`` is enforced: the mutant must be the better competitor.
    """

    r_a: float
    r_b: float
    k_a: float
    k_b: float

    def __post_init__(self):
        for name in ("r_a", "r_b", "k_a", "k_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
        if not self.k_a < self.k_b:
            raise ValidationError(
                f"k_a must be < k_b (mutant is the stronger competitor), got "
                f"k_a={self.k_a!r}, k_b={self.k_b!r}"
            )


@dataclass(frozen=True)
class Efficacy:
    """Treatment efficacies; the drug acts more strongly on strain A."""

    c_a: float
    c_b: float

    def __post_init__(self):
        if not (0.0 <= self.c_b < self.c_a <= 1.0):
            raise ValidationError(
                f"efficacies must satisfy 0 <= c_b < c_a <= 1, got "
                f"c_a={self.c_a!r}, c_b={self.c_b!r}"
            )


# Used internally for the free system, where treatment never enters.
_NO_TREATMENT = object.__new__(Efficacy)
object.__setattr__(_NO_TREATMENT, "c_a", 0.0)
object.__setattr__(_NO_TREATMENT, "c_b", 0.0)


@dataclass(frozen=True)
class CostWeights:
    """Running-cost configuration.

    The state-bound penalty ``penalty_mu * max(0, v_b - penalty_xi)**2`` is
    active only when ``penalty_mu > 0`` and ``penalty_xi`` is finite.
    """

    target_a: float
    penalty_xi: float = math.inf
    penalty_mu: float = 0.0

    def __post_init__(self):
        if not self.penalty_xi > 0:
            raise ValidationError(f"penalty_xi must be > 0, got {self.penalty_xi!r}")
        if not self.penalty_mu >= 0:
            raise ValidationError(f"penalty_mu must be >= 0, got {self.penalty_mu!r}")

    @classmethod
    def for_phenotype(cls, p: Phenotype, **kwargs) -> "CostWeights":
        return cls(target_a=p.k_a, **kwargs)

    @property
    def penalty_active(self) -> bool:
        return self.penalty_mu > 0 and math.isfinite(self.penalty_xi)

    def with_penalty(self, xi: float, mu: float) -> "CostWeights":
        return CostWeights(self.target_a, xi, mu)


def check_control(u, upper=1.0):
    if not (0.0 <= u <= upper):
        raise ValidationError(f"control value must lie in [0, {upper}], got {u!r}")


def rhs_free(p: Phenotype, s) -> np.ndarray:
    v_a, v_b = s[0], s[1]
    total = v_a + v_b
    return np.array([
        p.r_a * (1.0 - total / p.k_a) * v_a,
        p.r_b * (1.0 - total / p.k_b) * v_b,
    ])


def rhs_controlled(p: Phenotype, e: Efficacy, s, u: float) -> np.ndarray:
    check_control(u)
    v_a, v_b = s[0], s[1]
    total = v_a + v_b
    return np.array([
        p.r_a * (1.0 - total / p.k_a) * v_a - e.c_a * u * v_a,
        p.r_b * (1.0 - total / p.k_b) * v_b - e.c_b * u * v_b,
    ])


def jacobian(p: Phenotype, e: Efficacy | None, s, u: float = 0.0) -> np.ndarray:
    """State Jacobian of the controlled field (``e=None`` means untreated)."""
    if e is None:
        e = _NO_TREATMENT
    check_control(u)
    v_a, v_b = float(s[0]), float(s[1])
    return np.array([
        [p.r_a * (1.0 - (2.0 * v_a + v_b) / p.k_a) - e.c_a * u, -p.r_a * v_a / p.k_a],
        [-p.r_b * v_b / p.k_b, p.r_b * (1.0 - (v_a + 2.0 * v_b) / p.k_b) - e.c_b * u],
    ])


def control_derivative(e: Efficacy, s) -> np.ndarray:
    """Partial derivative of the controlled field with respect to ``u``."""
    return np.array([-e.c_a * s[0], -e.c_b * s[1]])


def state_cost(s, w: CostWeights) -> float:
    """State part of the running cost: the rate at which V_C accumulates."""
    v_a, v_b = s[0], s[1]
    cost = (v_a - w.target_a) ** 2 + v_b**2
    if w.penalty_active:
        excess = max(0.0, v_b - w.penalty_xi)
        cost += w.penalty_mu * excess**2
    return cost


def state_cost_gradient(s, w: CostWeights) -> np.ndarray:
    v_a, v_b = s[0], s[1]
    d_b = 2.0 * v_b
    if w.penalty_active:
        d_b += 2.0 * w.penalty_mu * max(0.0, v_b - w.penalty_xi)
    return np.array([2.0 * (v_a - w.target_a), d_b])


def cost_integrand(s, u: float, w: CostWeights) -> float:
    return state_cost(s, w) + u * u


@dataclass(frozen=True)
class Dynamics:
    """Controlled field bound to fixed parameters, as consumed by the steppers."""

    phenotype: Phenotype
    efficacy: Efficacy = field(default=_NO_TREATMENT)

    def __call__(self, s, u):
        return rhs_controlled(self.phenotype, self.efficacy, s, u)

    def jac(self, s, u):
        return jacobian(self.phenotype, self.efficacy, s, u)

    def du(self, s):
        return control_derivative(self.efficacy, s)


class ScalarField:
    """Float-only form of the controlled field and running cost for hot loops.

    Evaluates the same expressions as :func:`rhs_controlled`,
    :func:`jacobian` and :func:`state_cost_gradient`, without building
    arrays per call.
    """

    __slots__ = ("r_a", "r_b", "k_a", "k_b", "c_a", "c_b", "target", "xi", "mu")

    def __init__(self, p: Phenotype, e: Efficacy | None, w: CostWeights):
        e = e or _NO_TREATMENT
        self.r_a, self.r_b, self.k_a, self.k_b = p.r_a, p.r_b, p.k_a, p.k_b
        self.c_a, self.c_b = e.c_a, e.c_b
        self.target = w.target_a
        self.xi = w.penalty_xi if w.penalty_active else math.inf
        self.mu = w.penalty_mu if w.penalty_active else 0.0

    def f(self, a, b, u):
        s = a + b
        return (
            self.r_a * (1.0 - s / self.k_a) * a - self.c_a * u * a,
            self.r_b * (1.0 - s / self.k_b) * b - self.c_b * u * b,
        )

    def jac(self, a, b, u):
        ra_ka = self.r_a / self.k_a
        rb_kb = self.r_b / self.k_b
        return (
            self.r_a * (1.0 - (2.0 * a + b) / self.k_a) - self.c_a * u,
            -ra_ka * a,
            -rb_kb * b,
            self.r_b * (1.0 - (a + 2.0 * b) / self.k_b) - self.c_b * u,
        )

    def cost(self, a, b):
        c = (a - self.target) ** 2 + b * b
        if b > self.xi:
            c += self.mu * (b - self.xi) ** 2
        return c

    def cost_grad(self, a, b):
        d_b = 2.0 * b
        if b > self.xi:
            d_b += 2.0 * self.mu * (b - self.xi)
        return 2.0 * (a - self.target), d_b
