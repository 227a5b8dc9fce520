"""Exception types raised by curvreg."""


class CurvregError(Exception):
    """Base class for every error the library raises on bad input or state."""


class GraphFormatError(CurvregError, ValueError):
    pass


class CapacityError(CurvregError):
    """Raised when an exhaustive computation is requested on a graph that is too large."""


class DegenerateError(CurvregError, ValueError):
    """Raised when every sample of a geometric quantity was degenerate."""


class TrainingError(CurvregError, RuntimeError):
    pass
