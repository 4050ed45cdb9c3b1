"""Exception hierarchy shared by all modules."""


class TransportError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(TransportError, ValueError):
    """Inconsistent dimensions, out-of-range indices, bad parameters."""


class ConfigurationError(TransportError, ValueError):
    """Invalid run configuration or mesh description."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class InvalidCrossSectionError(TransportError, ValueError):
    pass


class SingularDiagonalError(TransportError, ArithmeticError):
    def __init__(self, row):
        self.row = int(row)
        super().__init__(f"zero diagonal entry in row {self.row}")


class SingularMatrixError(TransportError, ArithmeticError):
    pass


class NumericalBreakdownError(TransportError, ArithmeticError):
    pass


class DegeneratePartitionError(TransportError):
    pass


class CoverageError(TransportError):
    """An F-point has no strong C-point dependency."""

    def __init__(self, point, message=None):
        self.point = int(point)
        super().__init__(message or f"F-point {self.point} has no strong C-point dependency")


class InterpolationValidityError(TransportError):
    pass


class UnreachablePointError(TransportError):
    def __init__(self, points):
        self.points = [int(p) for p in points]
        head = ", ".join(str(p) for p in self.points[:10])
        super().__init__(
            f"{len(self.points)} F-point(s) unreachable from C through strong edges: {head}"
        )


class StagnationError(TransportError):
    def __init__(self, level, theta, size):
        self.level = level
        self.theta = theta
        self.size = size
        super().__init__(
            f"coarsening stagnated at level {level} (size {size}, theta={theta})"
        )


class ZeroFissionSourceError(TransportError, ArithmeticError):
    pass


class NonConvergenceError(TransportError):
    def __init__(self, message, stats=None):
        self.stats = stats
        super().__init__(message)
