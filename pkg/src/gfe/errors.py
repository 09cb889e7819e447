"""Exception types raised by the library."""


class GfeError(Exception):
    """Base class for all library errors."""


class AntipodalPair(GfeError):
    """Two points are too far apart for a unique connecting geodesic."""


class ConstraintViolation(GfeError):
    """A point or tangent vector does not satisfy its embedding constraint."""


class InvalidDomain(GfeError):
    pass


class OutsideElement(GfeError):
    pass


class UnsupportedDegree(GfeError):
    pass


class BallViolation(GfeError):
    """Nodal values of an element are not contained in the well-posedness ball."""


class NoConvergence(GfeError):
    pass


class SingularSystem(GfeError):
    """The linearized interpolation condition is (numerically) singular."""


class LineSearchStall(GfeError):
    pass


class ConfigError(GfeError):
    pass
