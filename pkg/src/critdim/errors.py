"""Exception types raised by critdim."""


class CritdimError(Exception):
    """Base class for all library errors."""


class SingularNuisanceInformation(CritdimError, ValueError):
    """The nuisance information block H^2 cannot be inverted."""


class NotPositiveDefinite(CritdimError, ValueError):
    """A matrix that must be positive definite has a negative eigenvalue."""


class NoLocalMaximizer(CritdimError, ValueError):
    """The radial cubic problem has no strict local maximum (a >= 1/4)."""


class NonFinite(CritdimError, FloatingPointError):
    """A contrast evaluation produced inf or nan."""


class InsufficientSamples(CritdimError, ValueError):
    """Too few samples for the requested statistic."""


class ConfigInvalid(CritdimError, ValueError):
    """A sweep or CLI configuration failed validation.

    ``field`` names the offending key when one can be singled out.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class EmptyGroup(CritdimError, ValueError):
    """Aggregation was asked to summarise an empty set of records."""


class SchemaMismatch(CritdimError, ValueError):
    """A records CSV does not carry the expected header."""
