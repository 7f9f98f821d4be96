"""Two-strain viral competition under antiviral treatment.

Simulation and optimal dosing schedules for a
Lotka-Volterra style competition between an original strain and its
better-adapted mutant.
"""

from .equilibria import (
    EquilibriumReport,
    Verdict,
    classify_stability,
    degenerate_control,
    equilibria_constant_control,
    equilibria_free,
)
from .errors import (
    ConstraintNotMet,
    GridMismatch,
    InfeasibleStart,
    MaxIterationsExceeded,
    NegativeStateOverflow,
    NewtonDivergence,
    NonMonotoneStall,
    ParseError,
    SolverError,
    ValidationError,
)
from .integrators import StepMethod, TimeGrid, Trajectory, empirical_order, integrate, step
from .model import (
    CostWeights,
    Dynamics,
    Efficacy,
    Phenotype,
    cost_integrand,
    jacobian,
    rhs_controlled,
    rhs_free,
)
from .ocp import (
    AdjointTrajectory,
    ControlSchedule,
    SolveReport,
    SolverOptions,
    adjoint_sweep,
    gradient,
    objective,
    solve_fbsm,
    solve_penalty,
)

__version__ = "0.1.0"
