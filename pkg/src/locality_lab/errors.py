"""Exception hierarchy shared by every module."""


class LocalityLabError(Exception):
    """Base class for all errors raised by locality_lab."""


class InvalidMeshError(LocalityLabError, ValueError):
    pass


class InvalidGeometryError(LocalityLabError, ValueError):
    pass


class DegenerateRegionError(LocalityLabError, ValueError):
    pass


class MeshMismatchError(LocalityLabError, ValueError):
    pass


class BoundaryMismatchError(LocalityLabError, ValueError):
    def __init__(self, message, sites=()):
        super().__init__(message)
        self.sites = tuple(int(s) for s in sites)


class MetricDegenerateError(LocalityLabError, ValueError):
    pass


class NonconvergenceError(LocalityLabError, RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConjugatePointError(LocalityLabError, RuntimeError):
    """The action Hessian is (numerically) singular: the endpoints are conjugate."""

    def __init__(self, message, ratio=float("nan")):
        super().__init__(message)
        self.ratio = ratio


class ClassicallyForbiddenError(LocalityLabError, ValueError):
    def __init__(self, message, slices=()):
        super().__init__(message)
        self.slices = tuple(int(s) for s in slices)


class InconclusiveError(LocalityLabError, RuntimeError):
    pass


class InvalidThresholdError(LocalityLabError, ValueError):
    pass


class CausticError(LocalityLabError, RuntimeError):
    pass


class PropagationError(LocalityLabError, RuntimeError):
    pass


class UnsupportedError(LocalityLabError, ValueError):
    pass


class InvalidCountError(LocalityLabError, ValueError):
    pass


class ConfigError(LocalityLabError, ValueError):
    """Configuration parse or validation failure (CLI exit code 2)."""

    def __init__(self, message, line=None, column=None, key=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.key = key
