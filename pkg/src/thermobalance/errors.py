"""Exception types shared across the package."""


class ModelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ModelError):
    """Bad configuration file, key, value or schedule."""


class MeshError(ModelError):
    """Geometry cannot be resolved on the requested grid."""


class SolverError(ModelError):
    """Linear solve failed or did not reach tolerance.

    Carries the residual history of the attempted solve.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class UnbalanceableError(ModelError):
    """No nonnegative power split nulls the thermopile at this flow rate."""

    def __init__(self, message, q=None, p1=None, p2=None):
        super().__init__(message)
        self.q = q
        self.p1 = p1
        self.p2 = p2


class RatioRangeError(ModelError):
    """Requested output ratio lies outside the calibration curve."""

    def __init__(self, message, ratio_min=None, ratio_max=None):
        super().__init__(message)
        self.ratio_min = ratio_min
        self.ratio_max = ratio_max
