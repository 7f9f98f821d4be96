"""Built-in acceptance checks, shared by the ``verify`` verb and the test suite.

Each check returns a :class:`CriterionResult` holding a pass flag, a
one-line detail with the measured numbers, and the wall time. Scenario
data comes from the shipped fixtures, so ``viralcomp verify`` and
``pytest tests/test_acceptance.py`` exercise exactly the same inputs.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .equilibria import (
    Verdict,
    classify_stability,
    degenerate_control,
    equilibria_free,
)
from .integrators import StepMethod, TimeGrid, integrate, empirical_order
from .model import jacobian, rhs_controlled
from .ocp import ControlSchedule, adjoint_sweep, gradient, objective, solve_fbsm, solve_penalty
from .scenario import load_scenario


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number}. {self.title}: {self.detail} ({self.seconds:.3f} s)"


def _timed(fn):
    start = time.perf_counter()
    passed, detail = fn()
    return passed, detail, time.perf_counter() - start


def check_free_equilibria():
    p = load_scenario("fig1").phenotype
    expected = [((3.0, 1.0), Verdict.UNSTABLE), ((-3.0, 1.0 / 6.0), Verdict.UNSTABLE),
                ((-1.0, -0.6), Verdict.STABLE)]
    best = math.inf
    for _ in range(20):
        start = time.perf_counter()
        reports = equilibria_free(p)
        best = min(best, time.perf_counter() - start)
    err = max(abs(a - b) for rep, (eig, _) in zip(reports, expected)
              for a, b in zip(rep.eigenvalues, eig))
    verdicts = all(rep.verdict is v for rep, (_, v) in zip(reports, expected))
    passed = err <= 1e-12 and verdicts and best < 1e-3
    return passed, f"max eigenvalue error {err:.1e}, verdicts ok={verdicts}, call {best * 1e3:.3f} ms"


def check_free_attractor():
    sc = load_scenario("fig1")
    grid = TimeGrid(0.0, 20.0, 0.01)
    start = time.perf_counter()
    errs = [float(np.max(np.abs(integrate("rk4", sc.phenotype, None, 0.0, grid, s).final
                                - (0.0, sc.phenotype.k_b))))
            for s in sc.initial_conditions]
    elapsed = time.perf_counter() - start
    passed = max(errs) <= 1e-3 and elapsed < 1.0
    shown = ", ".join(f"{s}:{e:.1e}" for s, e in zip(sc.initial_conditions, errs))
    return passed, f"distance to (0, k_b) per seed [{shown}], {elapsed:.2f} s"


def check_constant_inversion():
    sc = load_scenario("fig3")
    p, e, u = sc.phenotype, sc.efficacy, sc.constant_u
    target = np.array([7.800709, 0.0])
    grid = TimeGrid(0.0, 80.0, 0.01)
    seeds = [s for s in sc.initial_conditions if s[0] > 0]
    errs = [float(np.max(np.abs(integrate("rk4", p, e, u, grid, s).final - target))) for s in seeds]
    point = (p.k_a * (1.0 - e.c_a * u / p.r_a), 0.0)
    eigs, _ = classify_stability(jacobian(p, e, point, u))
    eig_err = max(abs(a - b) for a, b in zip(eigs, (-2.3402127, -0.0166076)))
    passed = max(errs) <= 1e-2 and eig_err <= 1e-6
    shown = ", ".join(f"{s}:{x:.1e}" for s, x in zip(seeds, errs))
    return passed, f"distance to (7.800709, 0) per seed [{shown}], eigenvalue error {eig_err:.1e}"


def check_degenerate():
    sc = load_scenario("fig3")
    p, e = sc.phenotype, sc.efficacy
    u = degenerate_control(p, e)
    total = p.k_a * (1.0 - e.c_a * u / p.r_a)
    frac = np.linspace(0.0, 1.0, 101)
    on_line = max(float(np.max(np.abs(rhs_controlled(p, e, (f * total, (1 - f) * total), u))))
                  for f in frac)
    off_line = min(float(np.max(np.abs(rhs_controlled(p, e, (f * total * 1.01, (1 - f) * total * 1.01), u))))
                   for f in frac)
    passed = abs(u - 2.0 / 3.0) <= 1e-12 and on_line < 1e-10 and off_line > 1e-10
    return passed, (f"u = {u!r}, max |rhs| on the line {on_line:.1e}, "
                    f"min |rhs| 1% off the line {off_line:.1e}")


def check_orders():
    start = time.perf_counter()
    expected = {StepMethod.EXPLICIT_EULER: 1, StepMethod.IMPLICIT_EULER: 1,
                StepMethod.TRAPEZOIDAL: 2, StepMethod.RK4: 4}
    orders = {m: empirical_order(m) for m in expected}
    p = load_scenario("fig1").phenotype
    coarse = integrate("implicit-euler", p, None, 0.0, TimeGrid(0.0, 20.0, 0.5), (1.0, 1.0))
    elapsed = time.perf_counter() - start
    ok = all(abs(orders[m] - k) <= 0.3 for m, k in expected.items())
    passed = ok and np.all(np.isfinite(coarse.states)) and elapsed < 10.0
    shown = ", ".join(f"{m.value} {o:.3f}" for m, o in orders.items())
    return passed, f"orders [{shown}], implicit Euler at dt=0.5 ends at {np.round(coarse.final, 4).tolist()}"


def check_adjoint_gradient(samples=10, h=1e-6, seed=20240601):
    sc = load_scenario("fig4")
    p, e, w, grid, init = sc.phenotype, sc.efficacy, sc.cost, sc.grid, sc.initial_conditions[0]
    rng = np.random.default_rng(seed)
    method = sc.solver.method
    worst = 0.0

    def value(v):
        return objective(integrate(method, p, e, v, grid, init, w), ControlSchedule(grid, v))

    for _ in range(samples):
        u = rng.uniform(0.0, sc.u_max, grid.n_intervals)
        sched = ControlSchedule(grid, u, sc.u_max)
        traj = integrate(method, p, e, u, grid, init, w)
        g = gradient(sched, traj, adjoint_sweep(p, e, w, traj, sched))
        for i in range(grid.n_intervals):
            up, um = u.copy(), u.copy()
            up[i] = min(u[i] + h, sc.u_max)
            um[i] = max(u[i] - h, 0.0)
            fd = (value(up) - value(um)) / (up[i] - um[i])
            worst = max(worst, abs(g[i] - fd) / max(abs(fd), 1e-300))
    return worst <= 1e-4, f"{samples} schedules x {grid.n_intervals} intervals, worst relative error {worst:.1e}"


def _fig4_solution():
    sc = load_scenario("fig4")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = solve_fbsm(sc.phenotype, sc.efficacy, sc.cost, sc.grid, sc.initial_conditions[0],
                            sc.u_max, sc.solver)
    return sc, report


def check_ocp(solution=None):
    sc, rep = solution or _fig4_solution()
    objs = np.array(rep.objectives)
    monotone = bool(np.all(np.diff(objs) <= 0.0))
    gap = float(np.min(rep.trajectory.v_a - rep.trajectory.v_b))
    # switch the drug off for 20 more time units
    tail_grid = TimeGrid(sc.grid.tf, sc.grid.tf + 20.0, sc.grid.dt)
    tail = integrate(sc.solver.method, sc.phenotype, sc.efficacy, 0.0, tail_grid,
                     rep.trajectory.final, sc.cost)
    rising = bool(np.all(np.diff(tail.v_b) > 0.0))
    passed = rep.converged and rep.iterations <= 500 and monotone and gap >= 0.0 and rising
    return passed, (f"status {rep.status} after {rep.iterations} sweeps, J = {rep.objective:.6f}, "
                    f"objectives non-increasing={monotone}, min(V_A - V_B) = {gap:.3e}, "
                    f"V_B rising after t_f={rising}")


def check_state_bound():
    sc = load_scenario("fig6")
    p, e, w, grid, init = sc.phenotype, sc.efficacy, sc.cost, sc.grid, sc.initial_conditions[0]
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = solve_penalty(p, e, w, grid, init, sc.u_max, sc.xi, sc.solver)
        loose = solve_penalty(p, e, w, grid, init, sc.u_max, p.k_b + 1.0, sc.solver)
        free = solve_fbsm(p, e, w, grid, init, sc.u_max, sc.solver)
    elapsed = time.perf_counter() - start
    viol = [r["constraint_violation"] for r in rep.rounds]
    monotone = all(b <= a for a, b in zip(viol, viol[1:]))
    rel = abs(loose.objective - free.objective) / abs(free.objective)
    passed = (rep.constraint_violation <= 1e-3 * sc.xi and monotone and rel <= 1e-3
              and elapsed < 120.0)
    return passed, (f"violation {rep.constraint_violation:.2e} (limit {1e-3 * sc.xi:.1e}) after "
                    f"{len(viol)} rounds, per round [{', '.join(f'{v:.1e}' for v in viol)}], "
                    f"inactive-bound objective gap {rel:.1e}, {elapsed:.1f} s")


def check_kkt(solution=None):
    sc, rep = solution or _fig4_solution()
    u = rep.schedule.values
    g = gradient(rep.schedule, rep.trajectory, rep.adjoint)
    tol = 10.0 * sc.solver.tol
    ok = (np.abs(g) < tol) | ((u == 0.0) & (g > 0.0)) | ((u == rep.schedule.u_max) & (g < 0.0))
    interior = (u > 0.0) & (u < rep.schedule.u_max)
    return bool(np.all(ok)), (f"{int(ok.sum())}/{u.size} intervals satisfy the pattern, "
                              f"max interior |g| {float(np.max(np.abs(g[interior]), initial=0.0)):.1e}, "
                              f"{int((u == 0).sum())} at 0, {int((u == rep.schedule.u_max).sum())} at u_max")


CRITERIA = [
    (1, "equilibria of the untreated system", check_free_equilibria),
    (2, "untreated attractor by t=20", check_free_attractor),
    (3, "constant-dose inversion by t=80", check_constant_inversion),
    (4, "degenerate dose", check_degenerate),
    (5, "integrator orders", check_orders),
    (6, "adjoint gradient vs finite differences", check_adjoint_gradient),
    (7, "optimal schedule keeps V_A >= V_B", check_ocp),
    (8, "state bound via penalty rounds", check_state_bound),
    (9, "discrete KKT pattern", check_kkt),
]


def run_criterion(number: int) -> CriterionResult:
    for num, title, fn in CRITERIA:
        if num == number:
            passed, detail, seconds = _timed(fn)
            return CriterionResult(num, title, bool(passed), detail, seconds)
    raise KeyError(f"no acceptance criterion {number}")


def run_all(numbers=None):
    numbers = numbers or [num for num, _, _ in CRITERIA]
    return [run_criterion(n) for n in numbers]
