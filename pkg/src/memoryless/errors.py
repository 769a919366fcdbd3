"""Exception types shared across the package."""


class NotStronglyConnectedError(ValueError):
    """Raised when an operation needs a strongly connected network."""


class ReducibleChainError(ValueError):
    """Raised when a transition matrix has more than one closed class."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap before reaching tolerance."""


class IncompatibleRuleError(ValueError):
    """The selected update rule cannot run on the given network."""


class NumericalFailure(RuntimeError):
    """A belief update produced a zero normalizer or a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
