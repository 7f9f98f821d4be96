"""Fixed-step integration of the competition model.

Four one-step schemes are available: explicit Euler, implicit Euler,
the trapezoidal rule and classical RK4. The implicit schemes are solved by
Newton iteration with the analytic Jacobian.

:func:`integrate` marches a piecewise-constant control schedule and also
accumulates the running cost ``V_C``. The quadrature for ``V_C`` is matched
to the stepper: left endpoint for explicit Euler, the trapezoid for the two
implicit schemes, and the RK4 stage sum for RK4.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientResolution,
    NegativeStateOverflow,
    NewtonDivergence,
    ValidationError,
)
from .model import CostWeights, Efficacy, Phenotype, ScalarField

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 25
NEGATIVE_TOL = 1e-9


class StepMethod(str, enum.Enum):
    EXPLICIT_EULER = "explicit-euler"
    IMPLICIT_EULER = "implicit-euler"
    TRAPEZOIDAL = "trapezoidal"
    RK4 = "rk4"

    @classmethod
    def parse(cls, name) -> "StepMethod":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"euler": "explicit-euler", "trapezoid": "trapezoidal", "trapezium": "trapezoidal"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValidationError(f"unknown method {name!r} (choose from {choices})") from None

    @property
    def implicit(self) -> bool:
        return self in (StepMethod.IMPLICIT_EULER, StepMethod.TRAPEZOIDAL)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + dt, ..., tf``.

    ``(tf - t0) / dt`` must be an integer up to a relative 1e-9, since
    decimal step sizes such as 0.1 are not exact in binary.
    """

    t0: float
    tf: float
    dt: float

    def __post_init__(self):
        if not (self.tf > self.t0 and self.dt > 0):
            raise ValidationError(f"need t0 < tf and dt > 0, got {self}")
        ratio = (self.tf - self.t0) / self.dt
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * max(n, 1):
            raise ValidationError(
                f"(tf - t0)/dt = {ratio!r} is not an integer; the grid must be uniform"
            )

    @classmethod
    def from_intervals(cls, t0: float, tf: float, n: int) -> "TimeGrid":
        return cls(t0, tf, (tf - t0) / n)

    @property
    def n_intervals(self) -> int:
        return round((self.tf - self.t0) / self.dt)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.n_intervals + 1)

    @property
    def step(self) -> float:
        """Step actually used: the span divided by the interval count."""
        return (self.tf - self.t0) / self.n_intervals

    def same_as(self, other: "TimeGrid") -> bool:
        return (
            self.n_intervals == other.n_intervals
            and math.isclose(self.t0, other.t0, abs_tol=1e-12)
            and math.isclose(self.tf, other.tf, rel_tol=1e-12, abs_tol=1e-12)
        )


@dataclass
class Trajectory:
    """States ``(v_a, v_b, v_c)`` at every node plus the control per interval."""

    grid: TimeGrid
    states: np.ndarray
    controls: np.ndarray
    method: StepMethod
    weights: CostWeights | None = None
    clamped: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def v_a(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def v_b(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def v_c(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1, :2]


def _newton(residual, jac, x0):
    x = np.array(x0, dtype=float)
    r = residual(x)
    norm = float(np.max(np.abs(r)))
    for it in range(NEWTON_MAX_ITER + 1):
        if norm <= NEWTON_TOL:
            return x
        if it == NEWTON_MAX_ITER or not math.isfinite(norm):
            break
        try:
            x = x - np.linalg.solve(jac(x), r)
        except np.linalg.LinAlgError:
            break
        r = residual(x)
        norm = float(np.max(np.abs(r)))
    raise NewtonDivergence(it, norm)


def _fd_jacobian(rhs, h=1e-7):
    def jac(x, u):
        cols = []
        for j in range(len(x)):
            dx = np.zeros_like(x)
            dx[j] = h * max(1.0, abs(x[j]))
            cols.append((rhs(x + dx, u) - rhs(x - dx, u)) / (2 * dx[j]))
        return np.column_stack(cols)

    return jac


def rk4_stages(rhs, x, u, dt):
    """Stage states and slopes of one classical RK4 step."""
    k1 = rhs(x, u)
    x2 = x + 0.5 * dt * k1
    k2 = rhs(x2, u)
    x3 = x + 0.5 * dt * k2
    k3 = rhs(x3, u)
    x4 = x + dt * k3
    k4 = rhs(x4, u)
    return (x, x2, x3, x4), (k1, k2, k3, k4)


def step(method, rhs, x, u, dt, jac=None):
    """Advance ``x`` by one step of ``dt`` under constant control ``u``.

    ``rhs(x, u)`` returns the derivative. Implicit schemes use ``jac(x, u)``
    when given, otherwise a central-difference Jacobian.
    """
    method = StepMethod.parse(method)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    x = np.asarray(x, dtype=float)
    if method is StepMethod.EXPLICIT_EULER:
        return x + dt * rhs(x, u)
    if method is StepMethod.RK4:
        _, (k1, k2, k3, k4) = rk4_stages(rhs, x, u, dt)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if jac is None:
        jac = _fd_jacobian(rhs)
    eye = np.eye(len(x))
    f0 = rhs(x, u)
    guess = x + dt * f0
    if method is StepMethod.IMPLICIT_EULER:
        return _newton(
            lambda y: y - x - dt * rhs(y, u),
            lambda y: eye - dt * jac(y, u),
            guess,
        )
    half = 0.5 * dt
    return _newton(
        lambda y: y - x - half * (f0 + rhs(y, u)),
        lambda y: eye - half * jac(y, u),
        guess,
    )


def _newton2(res, x0, y0):
    """Newton on a 2x2 system; ``res(a, b)`` returns residual and Jacobian entries."""
    a, b = x0, y0
    norm = math.inf
    for it in range(NEWTON_MAX_ITER + 1):
        r0, r1, j11, j12, j21, j22 = res(a, b)
        norm = max(abs(r0), abs(r1))
        if norm <= NEWTON_TOL:
            return a, b
        if it == NEWTON_MAX_ITER or not math.isfinite(norm):
            break
        det = j11 * j22 - j12 * j21
        if det == 0.0:
            break
        a -= (j22 * r0 - j12 * r1) / det
        b -= (j11 * r1 - j21 * r0) / det
    raise NewtonDivergence(it, norm)


def _advance(method, fld, a, b, u, dt):
    """One step of the state plus the matching increment of V_C, on floats."""
    f = fld.f
    if method is StepMethod.RK4:
        k1a, k1b = f(a, b, u)
        a2, b2 = a + 0.5 * dt * k1a, b + 0.5 * dt * k1b
        k2a, k2b = f(a2, b2, u)
        a3, b3 = a + 0.5 * dt * k2a, b + 0.5 * dt * k2b
        k3a, k3b = f(a3, b3, u)
        a4, b4 = a + dt * k3a, b + dt * k3b
        k4a, k4b = f(a4, b4, u)
        h = dt / 6.0
        cost = fld.cost
        dc = h * (cost(a, b) + 2.0 * cost(a2, b2) + 2.0 * cost(a3, b3) + cost(a4, b4))
        return (a + h * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
                b + h * (k1b + 2.0 * k2b + 2.0 * k3b + k4b), dc)
    fa, fb = f(a, b, u)
    if method is StepMethod.EXPLICIT_EULER:
        return a + dt * fa, b + dt * fb, dt * fld.cost(a, b)
    if method is StepMethod.IMPLICIT_EULER:
        h, ca, cb = dt, a, b
    else:
        h, ca, cb = 0.5 * dt, a + 0.5 * dt * fa, b + 0.5 * dt * fb

    def res(y0, y1):
        g0, g1 = f(y0, y1, u)
        j11, j12, j21, j22 = fld.jac(y0, y1, u)
        return (y0 - ca - h * g0, y1 - cb - h * g1,
                1.0 - h * j11, -h * j12, -h * j21, 1.0 - h * j22)

    na, nb = _newton2(res, a + dt * fa, b + dt * fb)
    return na, nb, 0.5 * dt * (fld.cost(a, b) + fld.cost(na, nb))


def integrate(
    method,
    p: Phenotype,
    e: Efficacy | None,
    schedule,
    grid: TimeGrid,
    init,
    w: CostWeights | None = None,
    u_max: float = 1.0,
) -> Trajectory:
    """March the controlled system over ``grid`` with a zero-order-hold schedule.

    Components that overshoot to within ``NEGATIVE_TOL`` below zero are
    clamped to zero and counted in ``Trajectory.clamped``. Anything further
    below zero raises :class:`NegativeStateOverflow`.
    """
    method = StepMethod.parse(method)
    n = grid.n_intervals
    controls = np.broadcast_to(np.asarray(schedule, dtype=float), (n,)).copy()
    if controls.size and (controls.min() < 0.0 or controls.max() > u_max):
        raise ValidationError(f"schedule values must lie in [0, {u_max}]")
    if np.any(controls > 0) and e is None:
        raise ValidationError("a nonzero schedule requires treatment efficacies")
    init = np.asarray(init, dtype=float)
    if init.shape != (2,) or np.any(init < 0) or not np.all(np.isfinite(init)):
        raise ValidationError(f"initial state must be two non-negative numbers, got {init!r}")
    if w is None:
        w = CostWeights.for_phenotype(p)
    fld = ScalarField(p, e, w)

    dt = grid.step
    times = grid.nodes
    states = np.empty((n + 1, 3))
    a, b = float(init[0]), float(init[1])
    states[0] = (a, b, 0.0)
    v_c = 0.0
    clamped = 0
    for i, u in enumerate(controls.tolist()):
        a, b, dc = _advance(method, fld, a, b, u, dt)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise NegativeStateOverflow(times[i + 1], np.array([a, b]))
        if a < 0.0 or b < 0.0:
            if min(a, b) < -NEGATIVE_TOL:
                raise NegativeStateOverflow(times[i + 1], np.array([a, b]))
            clamped += int(a < 0.0) + int(b < 0.0)
            a, b = max(a, 0.0), max(b, 0.0)
        v_c += dc
        states[i + 1] = (a, b, v_c)
    return Trajectory(grid, states, controls, method, w, clamped)


@dataclass(frozen=True)
class OrderScenario:
    """Smooth test problem for empirical convergence orders."""

    phenotype: Phenotype = field(default_factory=lambda: Phenotype(3.0, 1.0, 10.0, 12.0))
    efficacy: Efficacy | None = None
    control: float = 0.0
    init: tuple = (1.0, 1.0)
    tf: float = 2.0


def empirical_order(method, scenario: OrderScenario | None = None, dts=(0.1, 0.05, 0.025, 0.0125)):
    """Fit the observed convergence order of ``method``.

    Errors are measured at ``tf`` against a run of the same method with
    step ``min(dts)/64``; the order is the least-squares slope of
    ``log(error)`` against ``log(dt)``.
    """
    method = StepMethod.parse(method)
    scenario = scenario or OrderScenario()
    dts = sorted(dts, reverse=True)
    if len(dts) < 3:
        raise ValueError("need at least three step sizes")

    def endpoint(dt):
        grid = TimeGrid(0.0, scenario.tf, dt)
        traj = integrate(method, scenario.phenotype, scenario.efficacy,
                         scenario.control, grid, scenario.init)
        return traj.final

    ref = endpoint(dts[-1] / 64)
    errors = np.array([np.max(np.abs(endpoint(dt) - ref)) for dt in dts])
    floor = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(ref))))
    if np.any(errors <= floor):
        raise InsufficientResolution(
            f"errors {errors} reach the round-off floor {floor:.1e}; use larger steps"
        )
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)
