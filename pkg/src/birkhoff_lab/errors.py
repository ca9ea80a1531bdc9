"""Exception hierarchy shared by all modules."""


class BirkhoffLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(BirkhoffLabError, ValueError):
    pass


class DomainError(BirkhoffLabError, ValueError):
    pass


class UnsupportedOperation(BirkhoffLabError):
    pass


class IntegrationError(BirkhoffLabError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class PhaseBoxExit(IntegrationError):
    pass


class ShootingError(IntegrationError):
    pass


class ConvergenceError(BirkhoffLabError):
    pass


class MonotonicityError(BirkhoffLabError):
    pass


class DomainNotAbsorbingError(BirkhoffLabError):
    pass


class DegenerateDomainError(BirkhoffLabError):
    pass


class NotFoundError(BirkhoffLabError):
    pass


class SelfIntersectionError(BirkhoffLabError):
    pass


class ConstructionError(BirkhoffLabError):
    pass
