"""Exception hierarchy shared by the solvers, calculators and the CLI."""


class HypothesisError(ValueError):
    """A structural assumption of an estimate does not hold for the input."""


class BoundViolationError(ValueError):
    """A coefficient field left its declared ``[a, b]`` bounds."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class BlowUpError(NumericalError):
    """A simulated concentration exceeded the configured ceiling."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""


class BoundaryEquilibriumError(ConvergenceError):
    """Newton iterates drift to the boundary of the positive orthant."""
