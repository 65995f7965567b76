"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation 2, numerical 3, capability 4.
"""


class PerturbedTDError(Exception):
    exit_code = 1


class ValidationError(PerturbedTDError, ValueError):
    """Input violates a structural precondition (shape, stochasticity, range)."""

    exit_code = 2


class NumericalError(PerturbedTDError, ArithmeticError):
    """Singular system, divergence or non-convergence."""

    exit_code = 3


class DivergenceError(NumericalError):
    pass


class CapabilityError(PerturbedTDError):
    """Problem exceeds a configured size cap."""

    exit_code = 4
