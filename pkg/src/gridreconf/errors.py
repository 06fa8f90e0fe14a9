"""Exception hierarchy shared by all modules."""


class GridError(Exception):
    """Base class for every error raised by this package."""


class NetworkParseError(GridError):
    """Network or profile file could not be parsed."""


class NetworkValidationError(GridError):
    """Network description violates a model invariant."""


class DisconnectedNetworkError(NetworkValidationError):
    """Network is not connected even with every breaker closed."""


class ProfileError(GridError):
    pass


class MissingHourError(ProfileError):
    pass


class UnknownElementError(ProfileError):
    pass


class TopologyError(GridError):
    pass


class EnumerationCapError(TopologyError):
    """Too many reduced edges for the exhaustive brute-force mode."""


class NonRadialError(TopologyError):
    pass


class PowerFlowError(GridError):
    pass


class EvaluationError(GridError):
    """Objective requested on a power flow that did not converge."""


class OptimizerError(GridError):
    pass
