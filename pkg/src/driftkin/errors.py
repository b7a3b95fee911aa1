"""Exception types shared across the library."""


class DriftKinError(Exception):
    """Base class for all library errors."""


class DomainError(DriftKinError):
    """A coordinate left its declared domain (space or velocity)."""


class DegenerateFieldError(DriftKinError):
    """|B| fell below the positivity floor; the field direction is undefined."""


class GeometryError(DriftKinError):
    """A field line has the wrong topology for the requested operation."""


class SolvabilityError(DriftKinError):
    """A compatibility condition required for invertibility was violated."""


class ConditioningError(DriftKinError):
    """A linear system is singular beyond its expected null space."""


class AliasingError(DriftKinError):
    """A requested gyrophase harmonic exceeds the quadrature resolution."""


class NumericsError(DriftKinError):
    """A non-finite value appeared where a finite one was required."""


class TruncationError(DriftKinError):
    """A velocity-space quadrature tail estimate exceeds the tolerance."""


class CapabilityError(DriftKinError):
    """An input lacks data (derivatives, moments) the operation needs."""


class VacuumError(DriftKinError):
    """The density fell below the vacuum floor."""


class StabilityError(DriftKinError):
    """A time step violates the integrator's stability/resolution bound."""


class ForbiddenRegionError(DriftKinError):
    """The requested motion is classically forbidden (energy below the potential)."""


class ScenarioError(DriftKinError):
    """A scenario file failed to parse or validate."""
