"""Exception types shared across the package."""


class GripError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(GripError, ValueError):
    """An argument is outside its admissible range."""


class DegenerateError(GripError, ValueError):
    """A quantity needed for studentization vanished (zero residual or column)."""


class InfeasibleError(GripError):
    """A constrained l1 program has an empty feasible set.

    ``families`` names the constraint families whose removal restores
    feasibility (empty when no single family is to blame).  ``column`` is
    the tested-column index for projection fits, ``None`` otherwise.
    """

    def __init__(self, message, families=(), column=None):
        super().__init__(message)
        self.families = tuple(families)
        self.column = column


class SolverError(GripError, RuntimeError):
    """The LP backend returned a status that should be impossible."""
