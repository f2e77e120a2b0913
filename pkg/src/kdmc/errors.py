"""Exception taxonomy shared by all solver modules."""


class KdmcError(Exception):
    """Base class for all package errors."""


class DomainError(KdmcError, ValueError):
    """A position lies outside the simulation domain."""


class ParameterError(KdmcError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(KdmcError, RuntimeError):
    """A computation produced a non-finite value or failed to converge."""


class UnsupportedConfigError(KdmcError, RuntimeError):
    """The requested boundary/sampler combination is outside the supported
    parameter regime (e.g. would require negative particle weights)."""


class InvariantViolation(KdmcError, RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
