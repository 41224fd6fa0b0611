"""Exception types raised by the library."""


class HandsOffError(Exception):
    """Base class for all library errors."""


class DomainError(HandsOffError, ValueError):
    pass


class ValidationError(HandsOffError, ValueError):
    pass


class RefinementError(HandsOffError, ValueError):
    """Grid size incompatible with a step partition."""


class CapacityError(HandsOffError, ValueError):
    """Problem too large for an exhaustive method."""


class ShapeError(HandsOffError, ValueError):
    pass


class AdmissibilityError(HandsOffError, ValueError):
    """Control violates the bound ``|u| <= 1``."""


class DivergenceError(HandsOffError, ArithmeticError):
    """Solver produced a non-finite objective."""


class PenaltyError(HandsOffError, ValueError):
    """Penalty function fails the structural checks."""
