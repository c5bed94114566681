"""Exception types shared across the package."""


class TruncationError(ArithmeticError):
    """Probability mass beyond the Fock cutoff exceeds the allowed budget."""

    def __init__(self, message, tail_bound=None, dim=None):
        super().__init__(message)
        self.tail_bound = tail_bound
        self.dim = dim


class NumericalError(ArithmeticError):
    """An integrator or solver produced values outside its noise floor."""


class ConfigurationError(ValueError):
    """Requested parameters cannot be satisfied (e.g. unreachable entropy)."""


class ScanBudgetExhausted(RuntimeError):
    """The critical-point scan ran out of evaluations before finishing.

    Distinct from an empty result: an exhausted scan says nothing about
    whether a second solution branch exists.
    """
