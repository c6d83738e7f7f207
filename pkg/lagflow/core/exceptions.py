"""
Exception hierarchy for lagflow.

Every error carries the exit code the command line reports for it.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_TOLERANCE = 3


class LagflowError(Exception):
    """Base class for all lagflow errors"""

    exit_code = EXIT_USAGE


class UsageError(LagflowError, ValueError):
    """Bad command line, config file or argument combination"""


class GridError(LagflowError, ValueError):
    """Invalid grid or field construction"""


class ConeCoverageError(LagflowError, ValueError):
    """A lattice point is matched by no cone sector"""


class StencilError(LagflowError, ValueError):
    """A stencil left the grid and no ghost closure was supplied"""


class BranchAmbiguityError(LagflowError, ValueError):
    """Complex-determinant angle requested outside its principal branch"""


class ConditionAViolation(LagflowError, ValueError):
    """Hessian pinching -(1-delta) I <= D^2u <= (1-delta) I does not hold"""

    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class MissingSnapshotError(LagflowError, KeyError):
    """A snapshot requested from a FlowReport was never recorded"""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing snapshot"


class ReportError(LagflowError, ValueError):
    """Report too short or inconsistent for the requested diagnostic"""


class NumericalBlowUpError(LagflowError, ArithmeticError):
    """Non-finite or runaway values during time stepping"""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, step: int, location: tuple = ()):
        super().__init__(f"{message} (step {step}, index {location})")
        self.step = step
        self.location = location


class EigenvalueConvergenceError(LagflowError, ArithmeticError):
    """Cyclic Jacobi did not reach the off-diagonal threshold"""

    exit_code = EXIT_NUMERICAL


class NonConvergenceError(LagflowError):
    """A relaxation run ended before meeting its tolerance"""

    exit_code = EXIT_TOLERANCE

    def __init__(self, message: str, final_residual: float):
        super().__init__(f"{message} (final residual {final_residual:.6e})")
        self.final_residual = final_residual


class ToleranceError(LagflowError):
    """A verification finished but its acceptance tolerance was not met"""

    exit_code = EXIT_TOLERANCE
