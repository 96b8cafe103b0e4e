"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors return 1, data errors
return 2, numerical non-convergence returns 3.
"""


class SessionTailError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(SessionTailError):
    """An argument or configuration value is out of its valid range."""


class TraceFormatError(SessionTailError):
    """Malformed packet or session input data."""


class DegenerateDataError(SessionTailError):
    """The input data cannot support the requested statistic."""


class PeakRateUndefinedError(DegenerateDataError):
    """Session has fewer than two packets at distinct times."""


class NonConvergenceError(SessionTailError):
    """A numerical optimisation failed to converge.

    Carries the optimizer trace (sequence of evaluated points and
    objective values) for diagnosis.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
