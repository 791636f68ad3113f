"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments have the wrong shape, sign or dimension."""


class ValidationError(ValueError):
    """A problem, schedule or config fails its modelling assumptions."""


class NotAvailableError(LookupError):
    """Optional data (e.g. a Slater point) was requested but not supplied."""


class UnsupportedKindError(TypeError):
    """A closed-form routine was handed a function kind it cannot treat."""


class InfeasibleProblemError(ValueError):
    """The coupled constraint cannot be met anywhere in the box."""


class SolverError(RuntimeError):
    """A subproblem solve failed inside an iteration."""
