"""Shared exception types."""


class GateError(ValueError):
    """A validity hypothesis on input parameters is violated; the message
    names the exact inequality that failed."""


class NumericalError(RuntimeError):
    """A solver or quadrature failed to reach its contract."""


class IsotropicRegimeWarning(UserWarning):
    """The bulk potential has no positive uniaxial critical point."""
