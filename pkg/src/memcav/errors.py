"""Exception hierarchy.

The CLI maps the three families onto exit codes: ``UsageError`` -> 1,
``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class MemcavError(Exception):
    """Base class for all package errors."""


class UsageError(MemcavError):
    """Bad configuration, unknown keys, invalid arguments."""


class DataError(MemcavError, ValueError):
    """Input data violates a precondition (units, ordering, ranges)."""


class NumericalError(MemcavError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class OutOfRangeError(DataError):
    """Wavelength outside a tabulated dispersion range."""


class DegenerateStackError(DataError):
    """A stack definition that cannot describe a Bragg mirror."""


class NumericalDegeneracyError(NumericalError):
    """Non-finite transfer matrix product."""


class DegenerateProfileError(NumericalError):
    """Field profile without any field."""


class InstabilityError(NumericalError):
    """Optical resonator outside the stability region."""


class InsufficientDataError(DataError):
    """Not enough data points / peaks for the requested analysis."""


class UnidentifiableError(NumericalError):
    """The data carries no information about a requested parameter."""


class FitError(NumericalError):
    """A fit failed in a way that leaves no usable estimate."""
