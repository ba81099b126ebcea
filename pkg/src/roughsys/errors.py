"""Exception hierarchy shared by all modules."""


class RoughSysError(Exception):
    """Base class for every error raised by the package."""


class UnsupportedDimension(RoughSysError):
    pass


class InvalidGeometry(RoughSysError):
    pass


class OutsideDomain(RoughSysError):
    pass


class GeometryError(RoughSysError):
    pass


class BallTooLarge(GeometryError):
    pass


class LameDimensionMismatch(RoughSysError):
    pass


class SingularPrincipalMinor(RoughSysError):
    def __init__(self, node):
        self.node = tuple(int(i) for i in node)
        super().__init__(f"A_00 is singular at node {self.node}")


class NotNormalized(RoughSysError):
    pass


class MapDegenerate(RoughSysError):
    pass


class EllipticityLost(RoughSysError):
    pass


class EllipticityError(RoughSysError):
    pass


class ConvergenceError(RoughSysError):
    def __init__(self, message, residual_history=()):
        self.residual_history = list(residual_history)
        super().__init__(message)


class ConfigError(RoughSysError):
    pass


class IoError(RoughSysError, OSError):
    pass
