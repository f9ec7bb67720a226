"""Exception hierarchy shared by all modules."""


class ApproxLooError(Exception):
    """Base class for errors raised by approxloo."""


class DimensionMismatchError(ApproxLooError, ValueError):
    """Array shapes disagree with the model or with each other."""


class NonFiniteError(ApproxLooError, FloatingPointError):
    """A computation produced a non-finite value.

    ``index`` names the offending observation (or draw) when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(ApproxLooError, RuntimeError):
    """An iterative fit (Newton, MCMC, refit) did not converge.

    ``diagnostics`` carries whatever partial state was available when the
    failure was detected (gradient norm, R-hat values, observation index...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = {} if diagnostics is None else dict(diagnostics)


class GpdFitError(ApproxLooError, ValueError):
    """The generalized Pareto tail fit could not be computed."""


class ConfigError(ApproxLooError, ValueError):
    """Invalid run configuration or input data."""
