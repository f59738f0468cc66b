"""Exception hierarchy shared by all modules."""


class RecoveryError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RecoveryError, ValueError):
    """An argument lies outside the domain of the operation."""


class UndefinedDistributionError(DomainError):
    pass


class NoAdmissiblePathError(RecoveryError):
    """Every state sequence for the input has probability zero."""


class NumericalError(RecoveryError, ArithmeticError):
    pass


class InfiniteStakeError(DomainError):
    """A zero-probability trace would carry infinite information."""


class ModelFormatError(RecoveryError, ValueError):
    pass


class InvalidEventError(RecoveryError):
    """Event failed signature, hash or parent-creator checks."""


class OrphanEventError(RecoveryError):
    """Event references a parent the store does not hold yet."""


class UnknownEventError(DomainError, KeyError):
    pass


class ScenarioError(RecoveryError, ValueError):
    pass


class ConfigurationError(RecoveryError, ValueError):
    pass
