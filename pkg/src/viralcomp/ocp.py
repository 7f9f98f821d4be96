"""Optimal antiviral schedules by forward-backward sweep.

The control is piecewise constant on the integration grid. The discrete
objective is ::

    J(u) = V_C(t_f) + sum_i dt * u_i**2

where ``V_C`` is accumulated by the same scheme that advances the state.
:func:`adjoint_sweep` is the exact reverse-mode derivative of that scheme.
Its node costates converge to the Pontryagin costates as ``dt -> 0``, and
its per-interval *switching* values converge to
``c_a lam_a V_A + c_b lam_b V_B``. The gradient is therefore exact for the
discretized problem, which keeps finite-difference checks tight even on
coarse grids.

The state bound ``V_B <= xi`` is handled with an exterior quadratic penalty
whose weight grows over a few outer rounds (:func:`solve_penalty`).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConstraintNotMet,
    GridMismatch,
    InfeasibleStart,
    MaxIterationsExceeded,
    NonMonotoneStall,
    ValidationError,
)
from .integrators import StepMethod, TimeGrid, Trajectory, integrate
from .model import CostWeights, Efficacy, Phenotype, ScalarField

log = logging.getLogger(__name__)

_RK4_WEIGHTS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


@dataclass(frozen=True)
class ControlSchedule:
    grid: TimeGrid
    values: np.ndarray
    u_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.u_max <= 1.0:
            raise ValidationError(f"u_max must lie in (0, 1], got {self.u_max!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_intervals,):
            raise GridMismatch(
                f"schedule has {values.size} values for {self.grid.n_intervals} intervals"
            )
        if values.size and (values.min() < 0.0 or values.max() > self.u_max):
            raise ValidationError(f"schedule values must lie in [0, {self.u_max}]")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float, u_max: float = 1.0):
        return cls(grid, np.full(grid.n_intervals, float(value)), u_max)


@dataclass
class AdjointTrajectory:
    """Node costates ``(lam_a, lam_b)`` and the per-interval switching values."""

    grid: TimeGrid
    costates: np.ndarray
    switching: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    method: StepMethod = StepMethod.RK4
    omega: float = 0.5
    min_omega: float = 1e-10
    adaptive: bool = True
    max_iter: int = 500
    tol: float = 1e-4
    mu0: float = 10.0
    gamma: float = 10.0
    rounds: int = 5
    ctol_factor: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "method", StepMethod.parse(self.method))
        if not 0.0 < self.omega <= 1.0:
            raise ValidationError(f"relaxation omega must lie in (0, 1], got {self.omega!r}")
        if not 0.0 < self.min_omega <= self.omega:
            raise ValidationError("min_omega must lie in (0, omega]")
        if self.max_iter < 1 or self.rounds < 1:
            raise ValidationError("max_iter and rounds must be positive")
        if not (self.tol > 0 and self.mu0 > 0 and self.gamma > 1 and self.ctol_factor > 0):
            raise ValidationError("tol, mu0, ctol_factor must be > 0 and gamma > 1")


@dataclass
class SolveReport:
    schedule: ControlSchedule
    trajectory: Trajectory
    adjoint: AdjointTrajectory
    objective: float
    iterations: int
    convergence: list
    objectives: list
    constraint_violation: float
    status: str = "converged"
    penalty_mu: float = 0.0
    rounds: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self):
        doc = {
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "convergence": list(self.convergence),
            "objectives": list(self.objectives),
            "constraint_violation": self.constraint_violation,
            "u_max": self.schedule.u_max,
            "method": self.trajectory.method.value,
            "grid": {"t0": self.schedule.grid.t0, "tf": self.schedule.grid.tf,
                     "dt": self.schedule.grid.dt},
            "min_va_minus_vb": float(np.min(self.trajectory.v_a - self.trajectory.v_b)),
        }
        if self.penalty_mu:
            doc["penalty_mu"] = self.penalty_mu
        if self.rounds:
            doc["rounds"] = list(self.rounds)
        return doc


def _check_grids(*grids):
    first = grids[0]
    for g in grids[1:]:
        if not first.same_as(g):
            raise GridMismatch(f"grids differ: {first} vs {g}")


def objective(traj: Trajectory, schedule: ControlSchedule) -> float:
    """``V_C(t_f)`` plus the quadrature of ``u**2`` over the zero-order hold."""
    _check_grids(traj.grid, schedule.grid)
    return float(traj.v_c[-1] + schedule.grid.step * np.dot(schedule.values, schedule.values))


def constraint_violation(traj: Trajectory, xi: float) -> float:
    if not math.isfinite(xi):
        return 0.0
    return float(max(0.0, np.max(traj.v_b - xi)))


def _adjoint_rk4(fld, a, b, u, dt, la, lb):
    f = fld.f
    k1a, k1b = f(a, b, u)
    a2, b2 = a + 0.5 * dt * k1a, b + 0.5 * dt * k1b
    k2a, k2b = f(a2, b2, u)
    a3, b3 = a + 0.5 * dt * k2a, b + 0.5 * dt * k2b
    k3a, k3b = f(a3, b3, u)
    stages = ((a, b), (a2, b2), (a3, b3), (a + dt * k3a, b + dt * k3b))
    offsets = (0.5, 0.5, 1.0)
    sum_a, sum_b = la, lb
    carry_a = carry_b = 0.0
    dvc_du = 0.0
    for j in (3, 2, 1, 0):
        sa, sb = stages[j]
        wj = dt * _RK4_WEIGHTS[j]
        ka, kb = wj * la + carry_a, wj * lb + carry_b
        j11, j12, j21, j22 = fld.jac(sa, sb, u)
        ga, gb = fld.cost_grad(sa, sb)
        xa = wj * ga + j11 * ka + j21 * kb
        xb = wj * gb + j12 * ka + j22 * kb
        dvc_du -= fld.c_a * sa * ka + fld.c_b * sb * kb
        sum_a += xa
        sum_b += xb
        if j > 0:
            carry_a, carry_b = dt * offsets[j - 1] * xa, dt * offsets[j - 1] * xb
    return sum_a, sum_b, dvc_du


def _adjoint_step(method, fld, a, b, a1, b1, u, dt, la, lb):
    """Pull the cotangent ``(la, lb)`` of the next state back through one step.

    Returns the cotangent of ``(a, b)`` and the derivative of ``V_C(t_f)``
    with respect to the interval's control value.
    """
    if method is StepMethod.RK4:
        return _adjoint_rk4(fld, a, b, u, dt, la, lb)
    c_a, c_b = fld.c_a, fld.c_b
    j11, j12, j21, j22 = fld.jac(a, b, u)
    ga, gb = fld.cost_grad(a, b)
    if method is StepMethod.EXPLICIT_EULER:
        return (la + dt * (j11 * la + j21 * lb + ga),
                lb + dt * (j12 * la + j22 * lb + gb),
                -dt * (c_a * a * la + c_b * b * lb))
    g1a, g1b = fld.cost_grad(a1, b1)
    ra, rb = la + 0.5 * dt * g1a, lb + 0.5 * dt * g1b
    n11, n12, n21, n22 = fld.jac(a1, b1, u)
    h = dt if method is StepMethod.IMPLICIT_EULER else 0.5 * dt
    # solve (I - h J(x1))^T v = r
    m11, m12, m21, m22 = 1.0 - h * n11, -h * n21, -h * n12, 1.0 - h * n22
    det = m11 * m22 - m12 * m21
    va = (m22 * ra - m12 * rb) / det
    vb = (m11 * rb - m21 * ra) / det
    if method is StepMethod.IMPLICIT_EULER:
        return (va + 0.5 * dt * ga, vb + 0.5 * dt * gb,
                -dt * (c_a * a1 * va + c_b * b1 * vb))
    return (va + h * (j11 * va + j21 * vb) + 0.5 * dt * ga,
            vb + h * (j12 * va + j22 * vb) + 0.5 * dt * gb,
            -h * (c_a * (a + a1) * va + c_b * (b + b1) * vb))


def adjoint_sweep(p: Phenotype, e: Efficacy, w: CostWeights, traj: Trajectory,
                  schedule: ControlSchedule) -> AdjointTrajectory:
    """Backward costate sweep with terminal condition ``(0, 0)``."""
    _check_grids(traj.grid, schedule.grid)
    fld = ScalarField(p, e, w)
    n = schedule.grid.n_intervals
    dt = schedule.grid.step
    xs = traj.states[:, :2].tolist()
    u = schedule.values.tolist()
    lam = np.zeros((n + 1, 2))
    switching = np.empty(n)
    la = lb = 0.0
    for i in range(n - 1, -1, -1):
        (a, b), (a1, b1) = xs[i], xs[i + 1]
        la, lb, dvc_du = _adjoint_step(traj.method, fld, a, b, a1, b1, u[i], dt, la, lb)
        lam[i] = (la, lb)
        switching[i] = -dvc_du / dt
    return AdjointTrajectory(schedule.grid, lam, switching)


def gradient(schedule: ControlSchedule, traj: Trajectory, adj: AdjointTrajectory) -> np.ndarray:
    """Derivative of the discrete objective with respect to each control value."""
    _check_grids(schedule.grid, traj.grid, adj.grid)
    return schedule.grid.step * (2.0 * schedule.values - adj.switching)


def _rel_change(new, old):
    scale = max(float(np.max(np.abs(new))), float(np.max(np.abs(old))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(new - old))) / scale


def solve_fbsm(p: Phenotype, e: Efficacy, w: CostWeights, grid: TimeGrid, init,
               u_max: float = 1.0, opts: SolverOptions | None = None, u0=None) -> SolveReport:
    """Minimize the discrete objective over schedules in ``[0, u_max]``.

    Each sweep integrates forward and then sweeps the costates backward.
    The schedule then moves toward the stationarity value ``switching / 2``::

        u <- clip((1 - omega) u + omega * target, 0, u_max)

    with ``target = clip(switching / 2, -u_max, 2 u_max)``.

    With ``opts.adaptive`` each sweep starts from a Barzilai-Borwein
    estimate of the step, ``omega = 2 dt |du|^2 / (du . dg)`` clipped to
    ``[min_omega, 1]``, built from the last accepted change in controls and
    gradient. Otherwise every sweep starts from ``opts.omega``. ``omega`` is
    then halved (down to ``opts.min_omega``) until the objective does not
    increase, so accepted objectives are non-increasing. Iteration stops
    once the stationarity residual of the controls and the relative changes
    of the trajectory and its costates all fall below ``opts.tol``.
    """
    opts = opts or SolverOptions()
    values = np.zeros(grid.n_intervals) if u0 is None else np.array(u0, dtype=float)
    schedule = ControlSchedule(grid, np.clip(values, 0.0, u_max), u_max)

    def evaluate(sched):
        traj = integrate(opts.method, p, e, sched.values, grid, init, w, u_max)
        return traj, objective(traj, sched)

    traj, value = evaluate(schedule)
    adj = adjoint_sweep(p, e, w, traj, schedule)
    grad = gradient(schedule, traj, adj)
    step_omega = opts.omega
    objectives = [value]
    convergence = []
    status = "max-iterations"
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        # Widened box keeps steps bounded by omega while still letting entries
        # whose stationarity value lies outside [0, u_max] land exactly on the bound.
        target = np.clip(0.5 * adj.switching, -u_max, 2.0 * u_max)
        omega = step_omega
        while True:
            trial = ControlSchedule(
                grid, np.clip((1.0 - omega) * schedule.values + omega * target, 0.0, u_max), u_max
            )
            trial_traj, trial_value = evaluate(trial)
            if trial_value <= value:
                break
            omega *= 0.5
            if omega < opts.min_omega:
                trial = None
                break
        if trial is None:
            # No descent along the projected direction; accept if already stationary.
            residual = _rel_change(np.clip(target, 0.0, u_max), schedule.values)
            if residual < opts.tol:
                status = "converged"
                iterations -= 1
                break
            status = "stalled"
            report = _report(schedule, traj, adj, value, iterations - 1, convergence,
                             objectives, w, status)
            raise NonMonotoneStall(
                f"backtracking reached omega < {opts.min_omega} without descent "
                f"(stationarity residual {residual:.2e})",
                report,
            )
        trial_adj = adjoint_sweep(p, e, w, trial_traj, trial)
        # Control part: distance to the unrelaxed sweep, which bounds the
        # projected gradient regardless of how far omega was cut back.
        change = max(
            _rel_change(np.clip(0.5 * trial_adj.switching, 0.0, u_max), trial.values),
            _rel_change(trial_traj.states[:, :2], traj.states[:, :2]),
            _rel_change(trial_adj.costates, adj.costates),
        )
        if opts.adaptive:
            trial_grad = gradient(trial, trial_traj, trial_adj)
            du = trial.values - schedule.values
            curvature = float(du @ (trial_grad - grad))
            step_omega = (
                min(1.0, max(opts.min_omega, 2.0 * grid.step * float(du @ du) / curvature))
                if curvature > 0 else 1.0
            )
            grad = trial_grad
        schedule, traj, adj, value = trial, trial_traj, trial_adj, trial_value
        objectives.append(value)
        convergence.append(change)
        log.debug("sweep %d: J=%.10g change=%.3e omega=%g", iterations, value, change, omega)
        if change < opts.tol:
            status = "converged"
            break
    if status != "converged":
        warnings.warn(
            f"forward-backward sweep did not converge in {opts.max_iter} iterations",
            MaxIterationsExceeded,
            stacklevel=2,
        )
    return _report(schedule, traj, adj, value, iterations, convergence, objectives, w, status)


def _report(schedule, traj, adj, value, iterations, convergence, objectives, w, status):
    return SolveReport(
        schedule=schedule,
        trajectory=traj,
        adjoint=adj,
        objective=value,
        iterations=iterations,
        convergence=convergence,
        objectives=objectives,
        constraint_violation=constraint_violation(traj, w.penalty_xi),
        status=status,
        penalty_mu=w.penalty_mu if w.penalty_active else 0.0,
    )


def solve_penalty(p: Phenotype, e: Efficacy, w: CostWeights, grid: TimeGrid, init,
                  u_max: float = 1.0, xi: float = 0.5,
                  opts: SolverOptions | None = None) -> SolveReport:
    """Enforce ``V_B <= xi`` through escalating quadratic penalties.

    Penalty weights run through ``mu0 * gamma**k`` for ``k < rounds``. Each
    round is warm-started from the previous schedule. The first round whose
    violation is at most ``ctol_factor * xi`` is returned. Otherwise the last
    round is returned with status ``constraint-not-met``.
    """
    opts = opts or SolverOptions()
    if not xi > 0:
        raise ValidationError(f"xi must be > 0, got {xi!r}")
    if init[1] > xi:
        raise InfeasibleStart(f"V_B(0) = {init[1]!r} exceeds the bound xi = {xi!r}")
    ctol = opts.ctol_factor * xi
    rounds = []
    u0 = None
    mu = opts.mu0
    report = None
    for k in range(opts.rounds):
        weights = w.with_penalty(xi, mu)
        report = solve_fbsm(p, e, weights, grid, init, u_max, opts, u0)
        rounds.append({
            "mu": mu,
            "objective": report.objective,
            "constraint_violation": report.constraint_violation,
            "iterations": report.iterations,
            "status": report.status,
        })
        log.info("penalty round %d: mu=%g violation=%.3e", k, mu, report.constraint_violation)
        if report.constraint_violation <= ctol:
            break
        u0 = report.schedule.values
        mu *= opts.gamma
    else:
        warnings.warn(
            f"state bound still violated by {report.constraint_violation:.3e} after "
            f"{opts.rounds} penalty rounds",
            ConstraintNotMet,
            stacklevel=2,
        )
        report = replace(report, status="constraint-not-met")
    report.rounds = rounds
    return report
