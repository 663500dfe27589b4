"""Exception hierarchy shared by every qfin module.

The CLI prints ``<ClassName>: <message>`` for any :class:`QfinError`, so
messages are kept to one line.
"""


class QfinError(Exception):
    """Base class for all domain errors."""


class FormatError(QfinError):
    """Malformed input file (header, columns, unparsable rows)."""


class EmptyInputError(QfinError):
    pass


class DuplicateDateError(QfinError):
    def __init__(self, date):
        super().__init__(f"duplicate date {date}")
        self.date = date


class EmptySliceError(QfinError):
    pass


class SamplingError(QfinError):
    """Series is not (approximately) uniformly sampled."""


class InsufficientDataError(QfinError):
    pass


class ParameterError(QfinError, ValueError):
    pass


class ZeroRangeError(QfinError):
    pass


class ConvergenceError(QfinError):
    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace or []


class RegimeError(QfinError):
    """Diffusion fluctuation outside the perturbative regime."""


class NumericalError(QfinError):
    pass
