"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A parameter set or scenario violates a model invariant."""


class ParseError(ValueError):
    """A scenario document could not be read."""


class SolverError(RuntimeError):
    """Base class for numerical failures (mapped to exit status 2 by the CLI)."""


class NewtonDivergence(SolverError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Newton iteration failed after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class NegativeStateOverflow(SolverError):
    def __init__(self, time, state):
        self.time = time
        self.state = tuple(state)
        super().__init__(
            f"state component fell below the negative tolerance at t={time:.6g}: "
            f"{self.state}"
        )


class InsufficientResolution(SolverError):
    """Discretization errors sit at the round-off floor; no order can be fitted."""


class NoDegenerateControl(ValueError):
    """No control value in (0, 1] makes the two controlled nullclines coincide."""


class GridMismatch(ValueError):
    """The inputs of an objective or adjoint computation live on different time grids."""


class NonMonotoneStall(SolverError):
    """Backtracking on the relaxation factor could not reduce the objective."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class InfeasibleStart(ValueError):
    """Initial mutant density already exceeds the state bound."""


class MaxIterationsExceeded(RuntimeWarning):
    """The sweep hit its iteration cap; the best iterate is returned."""


class ConstraintNotMet(RuntimeWarning):
    """Penalty rounds ended with the state bound still violated."""


class ComplexEigenvalues(RuntimeWarning):
    """A Jacobian has a complex pair; only real parts enter the verdict."""
